//! Multi-scene reinforcement learning with a clustered critic.
//!
//! The value of a state is predicted as an assignment-weighted sum of
//! per-cluster means. A confusion-contribution penalty on the assignments
//! pushes them toward one-hot vectors while keeping every cluster in use.

pub mod analysis;
pub mod dve;
pub mod envs;
pub mod numerics;
pub mod ppo;
