//! Recurrent PPO with GAE and a clustered critic.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod gae;
pub mod net;
pub mod rollout;
pub mod train;
pub mod update;

pub use checkpoint::Checkpoint;
pub use config::{ConfigText, ModelMode, TrainConfig, CONFIG_KEYS};
pub use eval::{count_revisits, evaluate, EvalEpisode, EvalStep, EvalSummary};
pub use gae::{compute_gae, normalize};
pub use net::{NetArch, PolicyValueNet, StepOutput};
pub use rollout::{collect_rollouts, EpisodeStats, RolloutBuffer, Segment, Worker};
pub use train::{train, DirSink, EvalRow, MemorySink, MetricsRow, RunSink, TrainSummary};
pub use update::{ppo_update, LossWeights, UpdateSettings, UpdateStats};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dve::DveError;
use crate::envs::EnvError;
use crate::numerics::NumericsError;

const INIT_STREAM: u64 = 0x1417;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("worker {worker}: {source}")]
    Worker { worker: usize, source: EnvError },
    #[error("segment is truncated but has no bootstrap value")]
    MissingBootstrap,
    #[error("rollout buffer: {0}")]
    Buffer(String),
    #[error("non-finite {term} loss at step {step}")]
    NonFinite { step: u64, term: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dve(#[from] DveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Freshly initialised network for a config; weights depend only on the seed.
pub fn build_network(cfg: &TrainConfig) -> PolicyValueNet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(INIT_STREAM);
    PolicyValueNet::new(
        &mut rng,
        cfg.env.obs_dim(),
        cfg.env.n_actions(),
        cfg.encoder_width,
        cfg.hidden,
        cfg.effective_clusters(),
    )
}
