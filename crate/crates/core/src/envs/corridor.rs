//! One-dimensional platformer strip: walk right to the coin, crossing pits,
//! timed saws and pacing crawlers on the way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LENGTH: usize = 24;
pub const EPISODE_CAP: usize = 200;
pub const COIN_REWARD: f64 = 10.0;
pub const N_ACTIONS: usize = 4;

/// Cells visible behind and ahead of the agent.
const BEHIND: usize = 1;
const AHEAD: usize = 6;
const WINDOW: usize = BEHIND + 1 + AHEAD;
const CHANNELS: usize = 7;
pub const OBS_DIM: usize = WINDOW * CHANNELS;

pub const ACTION_NOOP: usize = 0;
pub const ACTION_LEFT: usize = 1;
pub const ACTION_RIGHT: usize = 2;
pub const ACTION_JUMP: usize = 3;

/// Hazard archetype; doubles as the ground-truth skill label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hazard {
    /// Static hole, must be jumped.
    Pit,
    /// Blade that is lethal one tick in three.
    Saw { phase: usize },
    /// Enemy pacing over two cells with period two.
    Crawler { phase: usize },
}

impl Hazard {
    pub fn label(&self) -> u8 {
        match self {
            Hazard::Pit => 0,
            Hazard::Saw { .. } => 1,
            Hazard::Crawler { .. } => 2,
        }
    }
}

/// Label reported when no hazard is in view.
pub const LABEL_CLEAR: u8 = 3;
pub const LABEL_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorLevel {
    /// `(start cell, hazard)`; crawlers also occupy `start + 1`.
    pub hazards: Vec<(usize, Hazard)>,
}

impl CorridorLevel {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0_12_D0_0C);
        let mut hazards = Vec::new();
        let mut cell = 3 + rng.random_range(0..2);
        while cell + 3 < LENGTH {
            let hazard = match rng.random_range(0..3) {
                0 => Hazard::Pit,
                1 => Hazard::Saw { phase: rng.random_range(0..3) },
                _ => Hazard::Crawler { phase: rng.random_range(0..2) },
            };
            let width = if matches!(hazard, Hazard::Crawler { .. }) { 2 } else { 1 };
            hazards.push((cell, hazard));
            cell += width + 2 + rng.random_range(0..3);
        }
        Self { hazards }
    }

    fn pit_at(&self, cell: usize) -> bool {
        self.hazards.iter().any(|&(c, h)| c == cell && h == Hazard::Pit)
    }

    fn saw_at(&self, cell: usize) -> Option<usize> {
        self.hazards.iter().find_map(|&(c, h)| match h {
            Hazard::Saw { phase } if c == cell => Some(phase),
            _ => None,
        })
    }

    fn crawler_track(&self, cell: usize) -> Option<(usize, usize)> {
        self.hazards.iter().find_map(|&(c, h)| match h {
            Hazard::Crawler { phase } if cell == c || cell == c + 1 => Some((c, phase)),
            _ => None,
        })
    }

    fn saw_active(phase: usize, t: usize) -> bool {
        (t + phase).is_multiple_of(3)
    }

    fn crawler_cell(start: usize, phase: usize, t: usize) -> usize {
        start + (t + phase) % 2
    }

    /// Whether `cell` is lethal at tick `t`.
    pub fn lethal(&self, cell: usize, t: usize) -> bool {
        if self.pit_at(cell) {
            return true;
        }
        if let Some(phase) = self.saw_at(cell) {
            if Self::saw_active(phase, t) {
                return true;
            }
        }
        if let Some((start, phase)) = self.crawler_track(cell) {
            if Self::crawler_cell(start, phase, t) == cell {
                return true;
            }
        }
        false
    }

    /// Nearest hazard archetype at or ahead of `pos` within the visible window.
    pub fn label_ahead(&self, pos: usize) -> u8 {
        self.hazards
            .iter()
            .filter(|&&(c, h)| {
                let end = if matches!(h, Hazard::Crawler { .. }) { c + 1 } else { c };
                end >= pos && c <= pos + AHEAD
            })
            .min_by_key(|&&(c, _)| c)
            .map_or(LABEL_CLEAR, |(_, h)| h.label())
    }

    pub fn observe(&self, pos: usize, t: usize) -> Vec<f64> {
        let mut obs = vec![0.0; OBS_DIM];
        for w in 0..WINDOW {
            let base = w * CHANNELS;
            let Some(cell) = (pos + w).checked_sub(BEHIND) else {
                obs[base + 6] = 1.0;
                continue;
            };
            if cell >= LENGTH {
                obs[base + 6] = 1.0;
                continue;
            }
            if self.pit_at(cell) {
                obs[base] = 1.0;
            }
            if let Some(phase) = self.saw_at(cell) {
                obs[base + 1] = 1.0;
                if Self::saw_active(phase, t + 1) {
                    obs[base + 2] = 1.0;
                }
            }
            if let Some((start, phase)) = self.crawler_track(cell) {
                obs[base + 3] = 1.0;
                if Self::crawler_cell(start, phase, t + 1) == cell {
                    obs[base + 4] = 1.0;
                }
            }
            if cell == LENGTH - 1 {
                obs[base + 5] = 1.0;
            }
        }
        obs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorridorState {
    pub pos: usize,
    pub t: usize,
}

impl CorridorState {
    pub fn start() -> Self {
        Self { pos: 0, t: 0 }
    }

    /// Returns `(reward, done)`.
    pub fn advance(&mut self, level: &CorridorLevel, action: usize) -> (f64, bool) {
        let target = match action {
            ACTION_LEFT => self.pos.saturating_sub(1),
            ACTION_RIGHT => self.pos + 1,
            ACTION_JUMP => self.pos + 2,
            _ => self.pos,
        };
        self.pos = target.min(LENGTH - 1);
        self.t += 1;
        if level.lethal(self.pos, self.t) {
            return (0.0, true);
        }
        if self.pos == LENGTH - 1 {
            return (COIN_REWARD, true);
        }
        (0.0, self.t >= EPISODE_CAP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level(hazards: Vec<(usize, Hazard)>) -> CorridorLevel {
        CorridorLevel { hazards }
    }

    #[test]
    fn coin_cell_pays_and_ends() {
        let lvl = level(vec![]);
        let mut s = CorridorState { pos: LENGTH - 2, t: 5 };
        assert_eq!(s.advance(&lvl, ACTION_RIGHT), (COIN_REWARD, true));
    }

    #[test]
    fn walking_into_pit_ends_without_reward() {
        let lvl = level(vec![(3, Hazard::Pit)]);
        let mut s = CorridorState { pos: 2, t: 0 };
        assert_eq!(s.advance(&lvl, ACTION_RIGHT), (0.0, true));
    }

    #[test]
    fn jump_clears_pit() {
        let lvl = level(vec![(3, Hazard::Pit)]);
        let mut s = CorridorState { pos: 2, t: 0 };
        assert_eq!(s.advance(&lvl, ACTION_JUMP), (0.0, false));
        assert_eq!(s.pos, 4);
    }

    #[test]
    fn saw_is_lethal_only_when_active() {
        let lvl = level(vec![(3, Hazard::Saw { phase: 0 })]);
        // active at ticks 0, 3, 6, ...
        let mut s = CorridorState { pos: 2, t: 2 };
        assert_eq!(s.advance(&lvl, ACTION_RIGHT), (0.0, true));
        let mut s = CorridorState { pos: 2, t: 0 };
        assert_eq!(s.advance(&lvl, ACTION_RIGHT), (0.0, false));
    }

    #[test]
    fn crawler_paces_two_cells() {
        let lvl = level(vec![(5, Hazard::Crawler { phase: 0 })]);
        assert!(lvl.lethal(5, 0));
        assert!(!lvl.lethal(6, 0));
        assert!(lvl.lethal(6, 1));
        assert!(!lvl.lethal(5, 1));
    }

    #[test]
    fn generated_levels_are_deterministic_and_safe_at_ends() {
        for seed in 0..50 {
            let a = CorridorLevel::generate(seed);
            assert_eq!(a, CorridorLevel::generate(seed));
            assert!(!a.hazards.is_empty());
            for &(c, h) in &a.hazards {
                let end = if matches!(h, Hazard::Crawler { .. }) { c + 1 } else { c };
                assert!(c >= 3 && end < LENGTH - 2);
            }
        }
    }

    #[test]
    fn label_sees_nearest_hazard() {
        let lvl = level(vec![(4, Hazard::Pit), (8, Hazard::Saw { phase: 1 })]);
        assert_eq!(lvl.label_ahead(0), 0);
        assert_eq!(lvl.label_ahead(5), 1);
        assert_eq!(lvl.label_ahead(9), LABEL_CLEAR);
    }
}
