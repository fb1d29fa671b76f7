//! When the confusion-contribution loss is switched on.

use super::BoostMode;

/// Least-squares slope of `ys` against their index.
pub fn least_squares_slope(ys: &[f64]) -> Option<f64> {
    let n = ys.len();
    if n < 2 {
        return None;
    }
    let mean_x = (n - 1) as f64 / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    Some(num / den)
}

/// Slope over the last `window` entries, if that many exist.
pub fn recent_slope(history: &[f64], window: usize) -> Option<f64> {
    if window < 2 || history.len() < window {
        return None;
    }
    least_squares_slope(&history[history.len() - window..])
}

/// Scale factor in `[0, 1]` for the confusion-contribution term.
///
/// Pre-boost ramps linearly to 1 over `ramp_fraction · total_steps`. Post-boost
/// switches to 1 once the episode-length trend flattens and never switches back.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostScheduler {
    mode: BoostMode,
    total_steps: u64,
    latched: bool,
}

impl BoostScheduler {
    pub fn new(mode: BoostMode, total_steps: u64) -> Self {
        Self { mode, total_steps, latched: false }
    }

    pub fn mode(&self) -> &BoostMode {
        &self.mode
    }

    pub fn is_latched(&self) -> bool {
        self.latched
    }

    /// Restores a saved latch, e.g. when resuming a run.
    pub fn set_latched(&mut self, latched: bool) {
        self.latched = latched;
    }

    pub fn coefficient(&mut self, step: u64, episode_length_history: &[f64]) -> f64 {
        match self.mode {
            BoostMode::Pre { ramp_fraction } => {
                let ramp = ramp_fraction * self.total_steps as f64;
                if ramp <= 0.0 {
                    1.0
                } else {
                    (step as f64 / ramp).min(1.0)
                }
            }
            BoostMode::Post { window, slope_threshold, min_pretrain_steps } => {
                if !self.latched && step >= min_pretrain_steps {
                    if let Some(slope) = recent_slope(episode_length_history, window) {
                        if slope < slope_threshold {
                            self.latched = true;
                        }
                    }
                }
                if self.latched {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Stateless form of [`BoostScheduler::coefficient`] for a fresh scheduler.
pub fn boost_coefficient(step: u64, episode_length_history: &[f64], mode: &BoostMode, total_steps: u64) -> f64 {
    BoostScheduler::new(mode.clone(), total_steps).coefficient(step, episode_length_history)
}
