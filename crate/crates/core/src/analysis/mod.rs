//! Verification experiments: cluster spread, confusion-reward correlation,
//! state partitions by cluster and navigation efficiency.

pub mod correlation;
pub mod efficiency;
pub mod partition;
pub mod sparsify;
pub mod spread;
pub mod stats;

pub use correlation::{confusion_reward_study, CorrelationReport, CorrelationSample, RunLog};
pub use efficiency::{efficiency_report, EfficiencyEntry, EfficiencyReport};
pub use partition::{argmax, partition_checkpoint, partition_states, ClusterPartition, StateRecord};
pub use sparsify::{sparsify_fit, SparsifyCheckpoint, SparsifyConfig, SparsifyReport};
pub use spread::{fit_head, spread_study, CellMeansHead, ChainDataset, FitResult, SpreadConfig, SpreadReport, SpreadRow};
pub use stats::{chi_square_independence, median, pearson, ChiSquare};

use thiserror::Error;

use crate::dve::DveError;
use crate::envs::EnvError;
use crate::numerics::NumericsError;
use crate::ppo::PpoError;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Input(String),
    #[error("correlation is undefined for a constant sample")]
    ZeroVariance,
    #[error("no logged evaluations between steps {from} and {to}")]
    EmptyWindow { from: u64, to: u64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Dve(#[from] DveError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
