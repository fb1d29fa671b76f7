//! Regression of a clustered critic onto the analytic chain values, with and
//! without the confusion-contribution loss.
//!
//! Assignments read the full observation while cluster means read the cell
//! alone, so the level can only enter the estimate through α.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dve::{boost_coefficient, cc_loss, combine, confusion, BoostMode};
use crate::envs::{ChainParams, EnvKind, LevelSet, MultiSceneEnv};
use crate::numerics::{softmax, AdamConfig, AdamState, Linear, ParamSet, Tape, Tensor, Var};

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadConfig {
    pub chain: ChainParams,
    pub levels: usize,
    pub gamma: f64,
    pub n_clusters: usize,
    pub iterations: usize,
    pub lr: f64,
    pub k1: f64,
    pub k2: f64,
    pub eps_log: f64,
    /// Fraction of the fit over which the loss weight ramps from 0 to 1.
    pub ramp_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for SpreadConfig {
    fn default() -> Self {
        Self {
            chain: ChainParams::default(),
            levels: 64,
            gamma: 0.99,
            n_clusters: 2,
            iterations: 400,
            lr: 0.05,
            k1: 0.5,
            k2: 0.5,
            eps_log: 1e-8,
            ramp_fraction: 0.5,
            seeds: (0..5).collect(),
        }
    }
}

/// The regression target: every `(cell, level)` pair of a chain level set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDataset {
    pub observations: Vec<Vec<f64>>,
    pub positions: Vec<usize>,
    pub values: Vec<f64>,
    pub components: Vec<usize>,
    /// Level index of each row; each level's chain is one trajectory.
    pub level_of_row: Vec<usize>,
    pub levels: usize,
}

impl ChainDataset {
    pub fn build(params: &ChainParams, levels: &LevelSet, gamma: f64) -> Result<Self, AnalysisError> {
        let env = MultiSceneEnv::new(EnvKind::ChainOracle(params.clone()), levels.clone())?;
        let mut ds = ChainDataset {
            observations: Vec::new(),
            positions: Vec::new(),
            values: Vec::new(),
            components: Vec::new(),
            level_of_row: Vec::new(),
            levels: levels.len(),
        };
        for level in 0..levels.len() {
            let component = env.chain_level(level).map(|l| l.component).unwrap_or(0);
            for pos in 0..params.length {
                ds.observations.push(env.chain_observation(pos, level)?);
                ds.positions.push(pos);
                ds.values.push(env.true_value(pos, level, gamma)?);
                ds.components.push(component);
                ds.level_of_row.push(level);
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Least-squares value of each component at each cell: the per-group mean.
    pub fn group_means(&self, cells: usize, components: usize) -> Vec<Vec<Option<f64>>> {
        let mut sum = vec![vec![0.0; components]; cells];
        let mut count = vec![vec![0usize; components]; cells];
        for (i, v) in self.values.iter().enumerate() {
            let pos = self.positions[i];
            sum[pos][self.components[i]] += v;
            count[pos][self.components[i]] += 1;
        }
        sum.iter()
            .zip(&count)
            .map(|(s, c)| s.iter().zip(c).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect())
            .collect()
    }
}

/// Clustered critic whose means depend on the cell only.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeansHead {
    pub assign: Linear,
    pub means: Linear,
    pub cells: usize,
    pub params: ParamSet,
}

/// Plain evaluation of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEval {
    pub alpha: Vec<f64>,
    pub means: Vec<f64>,
    pub value: f64,
}

impl CellMeansHead {
    pub fn new(rng: &mut ChaCha8Rng, obs_dim: usize, cells: usize, n_clusters: usize) -> Self {
        let mut params = ParamSet::new();
        let assign = Linear::new(&mut params, rng, "head.assign", obs_dim, n_clusters, 0.5);
        let means = Linear::new(&mut params, rng, "head.means", cells, n_clusters, 1.0);
        Self { assign, means, cells, params }
    }

    fn one_hot(&self, pos: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.cells];
        v[pos] = 1.0;
        v
    }

    /// Returns `(alpha, value)` nodes for a batch.
    fn forward(&self, tape: &mut Tape, obs: Var, cells: Var) -> Result<(Var, Var), AnalysisError> {
        let bound = tape.bind(&self.params);
        let logits = self.assign.forward(tape, &bound, obs)?;
        let alpha = tape.softmax_rows(logits);
        let means = self.means.forward(tape, &bound, cells)?;
        let weighted = tape.mul(alpha, means)?;
        Ok((alpha, tape.sum_rows(weighted)))
    }

    /// Cluster means at cell `pos`.
    pub fn cell_means(&self, pos: usize) -> Result<Vec<f64>, AnalysisError> {
        Ok(self.means.apply(&self.params, &self.one_hot(pos))?)
    }

    pub fn evaluate(&self, obs: &[f64], pos: usize) -> Result<CellEval, AnalysisError> {
        let alpha = softmax(&self.assign.apply(&self.params, obs)?)?;
        let means = self.cell_means(pos)?;
        let value = combine(&alpha, &means)?;
        Ok(CellEval { alpha, means, value })
    }
}

/// Outcome of one regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Mean over samples of the variance of the cluster means.
    pub spread: f64,
    pub mean_abs_error: f64,
    pub initial_mean_delta: f64,
    pub final_mean_delta: f64,
    /// Share of samples whose largest assignment is at least 0.9.
    pub confident_share: f64,
    pub converged: bool,
    pub head: CellMeansHead,
}

fn measure(head: &CellMeansHead, ds: &ChainDataset) -> Result<(f64, f64, f64, f64), AnalysisError> {
    let (mut spread, mut err, mut delta, mut confident) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..ds.len() {
        let e = head.evaluate(&ds.observations[i], ds.positions[i])?;
        let m = e.means.iter().sum::<f64>() / e.means.len() as f64;
        spread += e.means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / e.means.len() as f64;
        err += (ds.values[i] - e.value).abs();
        delta += confusion(&e.alpha)?;
        if e.alpha.iter().copied().fold(0.0, f64::max) >= 0.9 {
            confident += 1.0;
        }
    }
    let n = ds.len() as f64;
    Ok((spread / n, err / n, delta / n, confident / n))
}

/// Full-batch Adam on the squared error, plus the ramped
/// confusion-contribution loss when `with_cc` is set.
pub fn fit_head(cfg: &SpreadConfig, ds: &ChainDataset, seed: u64, with_cc: bool) -> Result<FitResult, AnalysisError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = CellMeansHead::new(&mut rng, cfg.chain.obs_dim(), cfg.chain.length, cfg.n_clusters);
    let obs = Tensor::from_rows(&ds.observations)?;
    let cells = Tensor::from_rows(&ds.positions.iter().map(|&p| head.one_hot(p)).collect::<Vec<_>>())?;
    let target = Tensor::new(vec![ds.len(), 1], ds.values.clone())?;
    let mut adam = AdamState::new(&head.params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let ramp = BoostMode::Pre { ramp_fraction: cfg.ramp_fraction };
    let (_, _, initial_mean_delta, _) = measure(&head, ds)?;
    let mut converged = true;
    for it in 0..cfg.iterations {
        let mut tape = Tape::new();
        let o = tape.constant(obs.clone());
        let c = tape.constant(cells.clone());
        let t = tape.constant(target.clone());
        let (alpha, value) = head.forward(&mut tape, o, c)?;
        let diff = tape.sub(value, t)?;
        let sq = tape.square(diff);
        let mut loss = tape.mean(sq)?;
        let scale = boost_coefficient(it as u64, &[], &ramp, cfg.iterations as u64);
        if with_cc && scale > 0.0 {
            let cc = cc_loss(&mut tape, alpha, &ds.level_of_row, ds.levels, cfg.k1 * scale, cfg.k2 * scale, cfg.eps_log)?;
            loss = tape.add(loss, cc)?;
        }
        if !tape.value(loss).item().is_finite() {
            converged = false;
            break;
        }
        let grads = tape.backward(loss, &head.params)?;
        if !grads.is_finite() {
            converged = false;
            break;
        }
        adam.step(&mut head.params, &grads)?;
    }
    let (spread, mean_abs_error, final_mean_delta, confident_share) = measure(&head, ds)?;
    let converged = converged && spread.is_finite() && mean_abs_error.is_finite();
    Ok(FitResult { spread, mean_abs_error, initial_mean_delta, final_mean_delta, confident_share, converged, head })
}

/// Paired fits for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadRow {
    pub seed: u64,
    pub mse: FitResult,
    pub sparse: FitResult,
}

impl SpreadRow {
    pub fn sparse_wider(&self) -> bool {
        self.sparse.spread > self.mse.spread
    }

    pub fn sparse_more_accurate(&self) -> bool {
        self.sparse.mean_abs_error < self.mse.mean_abs_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    pub rows: Vec<SpreadRow>,
}

impl SpreadReport {
    pub const HEADER: &'static str = "seed,spread_mse,spread_sparse,error_mse,error_sparse,delta_mse,delta_sparse,converged_mse,converged_sparse";

    /// Seeds where both fits converged and the sparse fit is wider and more accurate.
    pub fn wins(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.mse.converged && r.sparse.converged && r.sparse_wider() && r.sparse_more_accurate())
            .count()
    }

    /// One row per seed followed by a summary row of means and win counts.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                r.seed,
                r.mse.spread,
                r.sparse.spread,
                r.mse.mean_abs_error,
                r.sparse.mean_abs_error,
                r.mse.final_mean_delta,
                r.sparse.final_mean_delta,
                r.mse.converged,
                r.sparse.converged
            ));
        }
        let n = self.rows.len().max(1) as f64;
        let mean = |f: fn(&SpreadRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        out.push_str(&format!(
            "mean,{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            mean(|r| r.mse.spread),
            mean(|r| r.sparse.spread),
            mean(|r| r.mse.mean_abs_error),
            mean(|r| r.sparse.mean_abs_error),
            mean(|r| r.mse.final_mean_delta),
            mean(|r| r.sparse.final_mean_delta),
            self.rows.iter().filter(|r| r.mse.converged).count(),
            self.rows.iter().filter(|r| r.sparse.converged).count()
        ));
        out
    }
}

/// Runs both fits for every seed; seed `s` draws levels from base seed `s · 10⁶`
/// and shares its initial weights between the two variants.
pub fn spread_study(cfg: &SpreadConfig) -> Result<SpreadReport, AnalysisError> {
    if cfg.seeds.is_empty() || cfg.levels == 0 || cfg.iterations == 0 {
        return Err(AnalysisError::Input("spread study needs seeds, levels and iterations".into()));
    }
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let levels = LevelSet::from_count(cfg.levels, seed.wrapping_mul(1_000_000));
        let ds = ChainDataset::build(&cfg.chain, &levels, cfg.gamma)?;
        let mse = fit_head(cfg, &ds, seed, false)?;
        let sparse = fit_head(cfg, &ds, seed, true)?;
        rows.push(SpreadRow { seed, mse, sparse });
    }
    Ok(SpreadReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_covers_every_cell_of_every_level() {
        let params = ChainParams::default();
        let ds = ChainDataset::build(&params, &LevelSet::from_count(5, 0), 0.9).unwrap();
        assert_eq!(ds.len(), 5 * params.length);
        assert_eq!(ds.level_of_row[params.length], 1);
        // last cell is worth the terminal reward itself
        assert!(ds.values[params.length - 1] >= 0.1);
    }

    #[test]
    fn group_means_match_direct_averages() {
        let params = ChainParams::default();
        let ds = ChainDataset::build(&params, &LevelSet::from_count(20, 3), 0.9).unwrap();
        let g = ds.group_means(params.length, 2);
        let direct: Vec<f64> = (0..ds.len()).filter(|&i| ds.components[i] == 1 && ds.positions[i] == 2).map(|i| ds.values[i]).collect();
        let expect = direct.iter().sum::<f64>() / direct.len() as f64;
        assert!((g[2][1].unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn csv_has_one_row_per_seed_plus_summary() {
        let cfg = SpreadConfig { levels: 8, iterations: 5, seeds: vec![0, 1], ..SpreadConfig::default() };
        let report = spread_study(&cfg).unwrap();
        assert_eq!(report.to_csv().lines().count(), 1 + 2 + 1);
    }
}
