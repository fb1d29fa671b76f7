//! Parallel deterministic chains with an analytically known value function.
//!
//! Terminal rewards are drawn from a Gaussian mixture across levels, so the
//! joint distribution of `V(s, level)` is multi-modal by construction. Once the
//! agent passes the reveal cell, a hint feature tells which mixture component
//! the current level came from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const N_ACTIONS: usize = 2;
pub const ACTION_ADVANCE: usize = 0;
pub const ACTION_NOOP: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub length: usize,
    /// Component means of the terminal-reward mixture (equal weights).
    pub reward_means: Vec<f64>,
    pub reward_std: f64,
    /// First cell at which the component hint becomes visible.
    pub reveal: usize,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self { length: 8, reward_means: vec![2.0, 10.0], reward_std: 0.3, reveal: 1 }
    }
}

impl ChainParams {
    pub fn obs_dim(&self) -> usize {
        self.length + 1
    }

    pub fn episode_cap(&self) -> usize {
        4 * self.length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainLevel {
    pub component: usize,
    pub reward: f64,
}

impl ChainLevel {
    pub fn generate(seed: u64, params: &ChainParams) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC4A1_0000);
        let component = rng.random_range(0..params.reward_means.len().max(1));
        let mean = params.reward_means.get(component).copied().unwrap_or(1.0);
        let noise = Normal::new(0.0, params.reward_std.max(0.0)).expect("finite std");
        let reward = (mean + noise.sample(&mut rng)).max(0.1);
        Self { component, reward }
    }

    /// Component hint in `[-1, 1]`.
    pub fn hint(&self, params: &ChainParams) -> f64 {
        let n = params.reward_means.len();
        if n <= 1 {
            0.0
        } else {
            2.0 * self.component as f64 / (n - 1) as f64 - 1.0
        }
    }

    pub fn observe(&self, params: &ChainParams, pos: usize) -> Vec<f64> {
        let mut obs = vec![0.0; params.obs_dim()];
        obs[pos] = 1.0;
        if pos >= params.reveal {
            obs[params.length] = self.hint(params);
        }
        obs
    }

    /// `γ^(L-1-k) r`, the return from cell `k` when always advancing.
    pub fn true_value(&self, params: &ChainParams, pos: usize, gamma: f64) -> f64 {
        gamma.powi((params.length - 1 - pos) as i32) * self.reward
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    pub pos: usize,
    pub t: usize,
}

impl ChainState {
    pub fn start() -> Self {
        Self { pos: 0, t: 0 }
    }

    pub fn advance(&mut self, level: &ChainLevel, params: &ChainParams, action: usize) -> (f64, bool) {
        self.t += 1;
        if action == ACTION_ADVANCE {
            if self.pos + 1 == params.length {
                return (level.reward, true);
            }
            self.pos += 1;
        }
        (0.0, self.t >= params.episode_cap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn true_value_examples() {
        let params = ChainParams { length: 3, ..ChainParams::default() };
        let level = ChainLevel { component: 0, reward: 10.0 };
        assert_abs_diff_eq!(level.true_value(&params, 2, 0.9), 10.0);
        assert_abs_diff_eq!(level.true_value(&params, 0, 0.9), 8.1, epsilon = 1e-12);
        for k in 0..3 {
            assert_eq!(level.true_value(&params, k, 1.0), 10.0);
        }
    }

    #[test]
    fn non_terminal_steps_pay_nothing() {
        let params = ChainParams::default();
        let level = ChainLevel { component: 1, reward: 7.0 };
        let mut s = ChainState::start();
        for _ in 0..params.length - 1 {
            assert_eq!(s.advance(&level, &params, ACTION_ADVANCE), (0.0, false));
        }
        assert_eq!(s.advance(&level, &params, ACTION_ADVANCE), (7.0, true));
    }

    #[test]
    fn hint_hidden_before_reveal() {
        let params = ChainParams { reveal: 3, ..ChainParams::default() };
        let level = ChainLevel { component: 1, reward: 10.0 };
        assert_eq!(level.observe(&params, 2)[params.length], 0.0);
        assert_eq!(level.observe(&params, 3)[params.length], 1.0);
    }
}
