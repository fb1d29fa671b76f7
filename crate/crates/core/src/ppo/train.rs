//! Collect/update loop, per-update metrics, evaluation and run artifacts.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dve::{confusion, contribution, recent_slope, BoostMode, BoostScheduler};
use crate::numerics::{AdamConfig, AdamState};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::eval::{evaluate, EvalEpisode, EvalSummary};
use super::net::PolicyValueNet;
use super::rollout::{collect_rollouts, EpisodeStats, RolloutBuffer, Worker};
use super::update::{ppo_update, LossWeights, UpdateSettings};
use super::{build_network, PpoError};

const LEARNER_STREAM: u64 = 0x1EA2;
const EPISODE_WINDOW: usize = 32;
const WARN_SLOPE_WINDOW: usize = 8;
const WARN_SLOPE_THRESHOLD: f64 = 0.05;

/// One row of the per-update metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub mode: String,
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub mean_delta: f64,
    pub rho: Vec<f64>,
    pub max_alpha_p50: f64,
    pub max_alpha_p90: f64,
    pub boost_scale: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub cc_loss: f64,
}

impl MetricsRow {
    pub fn header(n_clusters: usize) -> String {
        let mut cols = vec!["step", "mode", "mean_reward", "mean_episode_length", "mean_delta"]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>();
        cols.extend((1..=n_clusters).map(|i| format!("rho_{i}")));
        cols.extend(
            ["max_alpha_p50", "max_alpha_p90", "boost_scale", "policy_loss", "value_loss", "entropy", "cc_loss"]
                .into_iter()
                .map(String::from),
        );
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.step, self.mode, self.mean_reward, self.mean_episode_length, self.mean_delta
        );
        for r in &self.rho {
            let _ = write!(s, ",{r:.6}");
        }
        let _ = write!(
            s,
            ",{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.max_alpha_p50,
            self.max_alpha_p90,
            self.boost_scale,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.cc_loss
        );
        s
    }
}

/// One row of the evaluation CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub step: u64,
    pub summary: EvalSummary,
}

impl EvalRow {
    pub const HEADER: &'static str = "step,episodes,mean_reward,mean_episode_length,mean_delta,mean_inv_delta,mean_revisits";

    pub fn to_csv(&self) -> String {
        let s = &self.summary;
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.step, s.episodes, s.mean_reward, s.mean_episode_length, s.mean_delta, s.mean_inv_delta, s.mean_revisits
        )
    }
}

/// One line of the trajectory dump.
#[derive(Debug, Clone, Serialize)]
pub struct DumpRecord<'a> {
    pub episode: usize,
    pub level_id: usize,
    pub level_seed: u64,
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub alpha: &'a [f64],
    pub value: f64,
    pub delta: f64,
    pub obstacle_label: u8,
    pub discrete_state: u64,
    pub feature_vector: &'a [f64],
}

/// Destination of run artifacts.
pub trait RunSink {
    fn metrics(&mut self, n_clusters: usize, row: &MetricsRow) -> io::Result<()>;
    fn eval(&mut self, row: &EvalRow) -> io::Result<()>;
    fn checkpoint(&mut self, update: u64, ckpt: &Checkpoint) -> io::Result<()>;
    fn trajectories(&mut self, episodes: &[EvalEpisode]) -> io::Result<()>;
    fn warn(&mut self, message: &str) {
        log::warn!("{message}");
    }
}

/// Keeps everything in memory; used by tests and the browser demo.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub metrics: Vec<MetricsRow>,
    pub evals: Vec<EvalRow>,
    pub checkpoints: Vec<(u64, Checkpoint)>,
    pub dumped: Vec<EvalEpisode>,
    pub warnings: Vec<String>,
}

impl RunSink for MemorySink {
    fn metrics(&mut self, _n: usize, row: &MetricsRow) -> io::Result<()> {
        self.metrics.push(row.clone());
        Ok(())
    }

    fn eval(&mut self, row: &EvalRow) -> io::Result<()> {
        self.evals.push(*row);
        Ok(())
    }

    fn checkpoint(&mut self, update: u64, ckpt: &Checkpoint) -> io::Result<()> {
        self.checkpoints.push((update, ckpt.clone()));
        Ok(())
    }

    fn trajectories(&mut self, episodes: &[EvalEpisode]) -> io::Result<()> {
        self.dumped.extend_from_slice(episodes);
        Ok(())
    }

    fn warn(&mut self, message: &str) {
        log::warn!("{message}");
        self.warnings.push(message.to_string());
    }
}

/// Writes `metrics.csv`, `eval.csv`, `trajectories.jsonl` and
/// `checkpoints/` under a run directory.
#[derive(Debug)]
pub struct DirSink {
    root: PathBuf,
    metrics_started: bool,
    eval_started: bool,
}

impl DirSink {
    pub const METRICS: &'static str = "metrics.csv";
    pub const EVAL: &'static str = "eval.csv";
    pub const TRAJECTORIES: &'static str = "trajectories.jsonl";
    pub const CHECKPOINTS: &'static str = "checkpoints";
    pub const LATEST: &'static str = "latest.ckpt";

    /// `append` keeps existing CSVs (resumed runs); otherwise they are truncated.
    pub fn new(root: &Path, append: bool) -> io::Result<Self> {
        fs::create_dir_all(root.join(Self::CHECKPOINTS))?;
        let mut sink = Self { root: root.to_path_buf(), metrics_started: false, eval_started: false };
        if append {
            sink.metrics_started = root.join(Self::METRICS).exists();
            sink.eval_started = root.join(Self::EVAL).exists();
        } else {
            for f in [Self::METRICS, Self::EVAL, Self::TRAJECTORIES] {
                let p = root.join(f);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
        Ok(sink)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn append(&self, file: &str, line: &str) -> io::Result<()> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(self.root.join(file))?;
        writeln!(f, "{line}")
    }
}

impl RunSink for DirSink {
    fn metrics(&mut self, n_clusters: usize, row: &MetricsRow) -> io::Result<()> {
        if !self.metrics_started {
            self.append(Self::METRICS, &MetricsRow::header(n_clusters))?;
            self.metrics_started = true;
        }
        self.append(Self::METRICS, &row.to_csv())
    }

    fn eval(&mut self, row: &EvalRow) -> io::Result<()> {
        if !self.eval_started {
            self.append(Self::EVAL, EvalRow::HEADER)?;
            self.eval_started = true;
        }
        self.append(Self::EVAL, &row.to_csv())
    }

    fn checkpoint(&mut self, update: u64, ckpt: &Checkpoint) -> io::Result<()> {
        let bytes = ckpt.to_bytes();
        let dir = self.root.join(Self::CHECKPOINTS);
        fs::write(dir.join(format!("update_{update:06}.ckpt")), &bytes)?;
        fs::write(dir.join(Self::LATEST), &bytes)
    }

    fn trajectories(&mut self, episodes: &[EvalEpisode]) -> io::Result<()> {
        let mut out = String::new();
        for ep in episodes {
            for s in &ep.steps {
                let rec = DumpRecord {
                    episode: ep.episode,
                    level_id: ep.level_id,
                    level_seed: ep.level_seed,
                    step: s.step,
                    action: s.action,
                    reward: s.reward,
                    alpha: &s.alpha,
                    value: s.value,
                    delta: s.delta,
                    obstacle_label: s.obstacle_label,
                    discrete_state: s.discrete_state,
                    feature_vector: &s.obs,
                };
                out.push_str(&serde_json::to_string(&rec).map_err(io::Error::other)?);
                out.push('\n');
            }
        }
        fs::write(self.root.join(Self::TRAJECTORIES), out)
    }
}

/// What a finished run returns besides its artifacts.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub net: PolicyValueNet,
    pub updates: u64,
    pub final_eval: EvalSummary,
    pub final_episodes: Vec<EvalEpisode>,
}

/// Linear-interpolated quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Confusion and assignment statistics of one rollout buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferDiagnostics {
    pub mean_delta: f64,
    pub rho: Vec<f64>,
    pub max_alpha_p50: f64,
    pub max_alpha_p90: f64,
}

pub fn buffer_diagnostics(buffer: &RolloutBuffer, n_clusters: usize) -> Result<BufferDiagnostics, PpoError> {
    let mut delta_sum = 0.0;
    let mut steps = 0usize;
    let mut max_alpha = Vec::new();
    let mut rho = vec![0.0; n_clusters];
    let mut trajectories = 0usize;
    for seg in &buffer.segments {
        for a in &seg.alphas {
            delta_sum += confusion(a)?;
            steps += 1;
            max_alpha.push(a.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        for traj in seg.alpha_trajectories() {
            for (acc, r) in rho.iter_mut().zip(contribution(&traj)?) {
                *acc += r;
            }
            trajectories += 1;
        }
    }
    max_alpha.sort_by(f64::total_cmp);
    rho.iter_mut().for_each(|r| *r /= trajectories.max(1) as f64);
    Ok(BufferDiagnostics {
        mean_delta: delta_sum / steps.max(1) as f64,
        rho,
        max_alpha_p50: quantile(&max_alpha, 0.5),
        max_alpha_p90: quantile(&max_alpha, 0.9),
    })
}

/// Runs a full training job, optionally continuing from a checkpoint.
pub fn train(cfg: &TrainConfig, sink: &mut dyn RunSink, resume: Option<&Checkpoint>) -> Result<TrainSummary, PpoError> {
    cfg.validate().map_err(PpoError::Config)?;
    let mut net = build_network(cfg);
    let mut adam = AdamState::new(&net.params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let cc = cfg.effective_cc();
    let mut scheduler = BoostScheduler::new(cc.boost.clone(), cfg.total_steps);
    let mut history: Vec<f64> = Vec::new();
    let mut start = 0u64;
    if let Some(ckpt) = resume {
        if ckpt.config_hash != cfg.hash() {
            return Err(PpoError::Checkpoint("checkpoint was written by a different config".into()));
        }
        let loaded = ckpt.network()?;
        net.params = loaded.params;
        adam = ckpt.adam.clone();
        scheduler.set_latched(ckpt.boost_latched);
        history = ckpt.length_history.clone();
        start = ckpt.update;
    }

    let mut learner_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ start.wrapping_mul(0xA24B_AED4_963E_E407));
    learner_rng.set_stream(LEARNER_STREAM);
    let mut workers = (0..cfg.workers)
        .map(|i| Worker::new(i, &cfg.env, &cfg.train_levels, cfg.seed, start, net.hidden()))
        .collect::<Result<Vec<_>, _>>()?;

    let spu = cfg.steps_per_update();
    let total = cfg.total_updates();
    let n_clusters = net.n_clusters();
    let settings = UpdateSettings { epochs: cfg.epochs, minibatches: cfg.minibatches, max_grad_norm: cfg.max_grad_norm };
    let mut recent: VecDeque<EpisodeStats> = VecDeque::with_capacity(EPISODE_WINDOW);
    let mut warned = false;
    let mut last_eval: Option<(EvalSummary, Vec<EvalEpisode>)> = None;

    for update in start..total {
        let env_steps = update * spu;
        let boost = if cc.is_active() { scheduler.coefficient(env_steps, &history) } else { 0.0 };
        if boost > 0.0 && !warned && matches!(cc.boost, BoostMode::Pre { .. }) {
            if let Some(slope) = recent_slope(&history, WARN_SLOPE_WINDOW) {
                if slope > WARN_SLOPE_THRESHOLD {
                    sink.warn(&format!(
                        "sparsifying loss active at step {env_steps} while mean episode length is still changing (slope {slope:.3})"
                    ));
                    warned = true;
                }
            }
        }

        let mut buffer = collect_rollouts(&net, &mut workers, cfg.segment_length)?;
        buffer.compute_advantages(cfg.gamma, cfg.lambda)?;
        let weights = LossWeights {
            clip: cfg.clip,
            value_coef: cfg.value_coef,
            entropy_coef: cfg.entropy_coef,
            boost_scale: boost,
            cc: cc.clone(),
        };
        let stats = ppo_update(&mut net, &mut adam, &buffer, &weights, &settings, &mut learner_rng, env_steps)?;

        for ep in &buffer.episodes {
            if recent.len() == EPISODE_WINDOW {
                recent.pop_front();
            }
            recent.push_back(*ep);
        }
        let (mean_reward, mean_len) = if recent.is_empty() {
            (0.0, 0.0)
        } else {
            let n = recent.len() as f64;
            (
                recent.iter().map(|e| e.total_reward).sum::<f64>() / n,
                recent.iter().map(|e| e.length as f64).sum::<f64>() / n,
            )
        };
        history.push(mean_len);
        let diag = buffer_diagnostics(&buffer, n_clusters)?;
        let done_steps = env_steps + spu;
        let row = MetricsRow {
            step: done_steps,
            mode: cfg.mode.name().to_string(),
            mean_reward,
            mean_episode_length: mean_len,
            mean_delta: diag.mean_delta,
            rho: diag.rho,
            max_alpha_p50: diag.max_alpha_p50,
            max_alpha_p90: diag.max_alpha_p90,
            boost_scale: boost,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            cc_loss: stats.cc_loss,
        };
        sink.metrics(n_clusters, &row)?;

        let finished = update + 1;
        let last = finished == total;
        if finished % cfg.eval_every as u64 == 0 || last {
            let episodes = evaluate(&net, &cfg.env, &cfg.eval_levels, cfg.eval_episodes, cfg.seed, last && cfg.dump_episodes > 0)?;
            let summary = EvalSummary::from_episodes(&episodes);
            sink.eval(&EvalRow { step: done_steps, summary })?;
            if last && cfg.dump_episodes > 0 {
                sink.trajectories(&episodes[..cfg.dump_episodes.min(episodes.len())])?;
            }
            last_eval = Some((summary, episodes));
        }
        if finished % cfg.checkpoint_every as u64 == 0 || last {
            let ckpt = Checkpoint::new(cfg, finished, done_steps, scheduler.is_latched(), &history, &net.params, &adam);
            sink.checkpoint(finished, &ckpt)?;
        }
    }

    let (final_eval, final_episodes) = match last_eval {
        Some(e) => e,
        None => {
            let eps = evaluate(&net, &cfg.env, &cfg.eval_levels, cfg.eval_episodes, cfg.seed, false)?;
            (EvalSummary::from_episodes(&eps), eps)
        }
    };
    Ok(TrainSummary { net, updates: total, final_eval, final_episodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_abs_diff_eq!(quantile(&v, 0.9), 4.6, epsilon = 1e-12);
        assert_eq!(quantile(&[], 0.5), 0.0);
    }

    #[test]
    fn header_column_order() {
        assert_eq!(
            MetricsRow::header(2),
            "step,mode,mean_reward,mean_episode_length,mean_delta,rho_1,rho_2,max_alpha_p50,max_alpha_p90,boost_scale,policy_loss,value_loss,entropy,cc_loss"
        );
    }

    #[test]
    fn row_formatting_is_fixed() {
        let row = MetricsRow {
            step: 256,
            mode: "dve".into(),
            mean_reward: 1.0 / 3.0,
            mean_episode_length: 12.0,
            mean_delta: 0.5,
            rho: vec![0.25, 0.25],
            max_alpha_p50: 0.9,
            max_alpha_p90: 1.0,
            boost_scale: 0.0,
            policy_loss: -0.01,
            value_loss: 2.0,
            entropy: 1.1,
            cc_loss: 0.0,
        };
        assert_eq!(
            row.to_csv(),
            "256,dve,0.333333,12.000000,0.500000,0.250000,0.250000,0.900000,1.000000,0.000000,-0.010000,2.000000,1.100000,0.000000"
        );
    }
}
