//! Dynamic value estimation: the clustered critic, its confusion and
//! contribution diagnostics, the sparsifying loss and its schedule.

mod head;
mod loss;
mod metrics;
mod schedule;

pub use head::{ClusterHead, HeadEval, HeadOutput};
pub use loss::cc_loss;
pub use metrics::{cc_loss_value, check_simplex, combine, confusion, contribution, SIMPLEX_TOL};
pub use schedule::{boost_coefficient, least_squares_slope, recent_slope, BoostScheduler};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DveError {
    #[error("assignment vector is off the simplex (sum {total})")]
    OffSimplex { total: f64 },
    #[error("empty assignment vector")]
    EmptyAssignment,
    #[error("cluster count mismatch: expected {expected}, got {got}")]
    ClusterCount { expected: usize, got: usize },
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("batch has no trajectories")]
    EmptyBatch,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoostMode {
    /// Apply from the first update, ramping over a fraction of training.
    Pre { ramp_fraction: f64 },
    /// Apply once the mean episode length stops growing.
    Post { window: usize, slope_threshold: f64, min_pretrain_steps: u64 },
}

impl BoostMode {
    pub fn name(&self) -> &'static str {
        match self {
            BoostMode::Pre { .. } => "pre",
            BoostMode::Post { .. } => "post",
        }
    }
}

/// Coefficients and schedule of the confusion-contribution loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CCLossConfig {
    pub k1: f64,
    pub k2: f64,
    pub eps_log: f64,
    pub boost: BoostMode,
    /// Keep the loss gradient inside the assignment layer.
    pub assignments_only: bool,
}

impl CCLossConfig {
    pub fn pre_boost() -> Self {
        Self {
            k1: 0.05,
            k2: 0.05,
            eps_log: 1e-8,
            boost: BoostMode::Pre { ramp_fraction: 0.25 },
            assignments_only: true,
        }
    }

    pub fn post_boost(min_pretrain_steps: u64) -> Self {
        Self {
            k1: 0.5,
            k2: 0.5,
            eps_log: 1e-8,
            boost: BoostMode::Post { window: 8, slope_threshold: 0.05, min_pretrain_steps },
            assignments_only: true,
        }
    }

    pub fn disabled() -> Self {
        Self { k1: 0.0, k2: 0.0, ..Self::pre_boost() }
    }

    pub fn is_active(&self) -> bool {
        self.k1 > 0.0 || self.k2 > 0.0
    }
}
