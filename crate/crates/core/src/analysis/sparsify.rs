//! Confusion-contribution loss alone, minimised over a fixed batch of latents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dve::{cc_loss, confusion, ClusterHead};
use crate::numerics::{AdamConfig, AdamState, ParamSet, Tape, Tensor};

use super::stats::median;
use super::AnalysisError;

#[derive(Debug, Clone, PartialEq)]
pub struct SparsifyConfig {
    pub n_clusters: usize,
    pub latent_dim: usize,
    pub trajectories: usize,
    pub trajectory_length: usize,
    pub iterations: usize,
    pub log_every: usize,
    pub lr: f64,
    pub k1: f64,
    pub k2: f64,
    pub eps_log: f64,
    pub seed: u64,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        Self {
            n_clusters: 3,
            latent_dim: 8,
            trajectories: 16,
            trajectory_length: 16,
            iterations: 400,
            log_every: 20,
            lr: 0.05,
            k1: 1.0,
            k2: 1.0,
            eps_log: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsifyCheckpoint {
    pub iteration: usize,
    pub loss: f64,
    pub median_max_alpha: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsifyReport {
    pub checkpoints: Vec<SparsifyCheckpoint>,
}

impl SparsifyReport {
    pub const HEADER: &'static str = "iteration,loss,median_max_alpha,mean_delta";

    pub fn first(&self) -> &SparsifyCheckpoint {
        &self.checkpoints[0]
    }

    pub fn last(&self) -> &SparsifyCheckpoint {
        self.checkpoints.last().expect("at least two checkpoints")
    }

    /// Mean δ never increases from one logged checkpoint to the next.
    pub fn delta_is_monotone(&self) -> bool {
        self.checkpoints.windows(2).all(|w| w[1].mean_delta <= w[0].mean_delta)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for c in &self.checkpoints {
            out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", c.iteration, c.loss, c.median_max_alpha, c.mean_delta));
        }
        out
    }
}

fn snapshot(head: &ClusterHead, params: &ParamSet, latents: &[Vec<f64>], iteration: usize, loss: f64) -> Result<SparsifyCheckpoint, AnalysisError> {
    let mut max_alpha = Vec::with_capacity(latents.len());
    let mut delta = 0.0;
    for z in latents {
        let eval = head.evaluate(params, z)?;
        max_alpha.push(eval.alpha.iter().copied().fold(0.0, f64::max));
        delta += confusion(&eval.alpha)?;
    }
    Ok(SparsifyCheckpoint {
        iteration,
        loss,
        median_max_alpha: median(&max_alpha).unwrap_or(0.0),
        mean_delta: delta / latents.len() as f64,
    })
}

/// Adam on the confusion-contribution loss of a freshly initialised cluster
/// head over random latents, logging assignment sparsity along the way.
pub fn sparsify_fit(cfg: &SparsifyConfig) -> Result<SparsifyReport, AnalysisError> {
    if cfg.n_clusters < 2 || cfg.trajectories == 0 || cfg.trajectory_length == 0 || cfg.log_every == 0 {
        return Err(AnalysisError::Input("sparsify fit needs ≥2 clusters and a non-empty batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamSet::new();
    let head = ClusterHead::new(&mut params, &mut rng, cfg.latent_dim, cfg.n_clusters);
    let rows = cfg.trajectories * cfg.trajectory_length;
    let latents: Vec<Vec<f64>> = (0..rows).map(|_| (0..cfg.latent_dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let batch = Tensor::from_rows(&latents)?;
    let trajectory_of_row: Vec<usize> = (0..rows).map(|r| r / cfg.trajectory_length).collect();
    let mut adam = AdamState::new(&params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });

    let mut checkpoints = Vec::new();
    for it in 0..=cfg.iterations {
        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let z = tape.constant(batch.clone());
        let alpha = head.alpha(&mut tape, &bound, z)?;
        let loss = cc_loss(&mut tape, alpha, &trajectory_of_row, cfg.trajectories, cfg.k1, cfg.k2, cfg.eps_log)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(AnalysisError::NonFinite(format!("sparsify loss at iteration {it}")));
        }
        if it % cfg.log_every == 0 || it == cfg.iterations {
            checkpoints.push(snapshot(&head, &params, &latents, it, value)?);
        }
        if it == cfg.iterations {
            break;
        }
        let grads = tape.backward(loss, &params)?;
        adam.step(&mut params, &grads)?;
    }
    Ok(SparsifyReport { checkpoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fit_sparsifies() {
        let cfg = SparsifyConfig { iterations: 60, log_every: 20, ..SparsifyConfig::default() };
        let report = sparsify_fit(&cfg).unwrap();
        assert_eq!(report.checkpoints.iter().map(|c| c.iteration).collect::<Vec<_>>(), vec![0, 20, 40, 60]);
        assert!(report.last().mean_delta < report.first().mean_delta);
        assert!(report.last().loss < report.first().loss);
    }

    #[test]
    fn single_cluster_is_rejected() {
        assert!(sparsify_fit(&SparsifyConfig { n_clusters: 1, ..SparsifyConfig::default() }).is_err());
    }
}
