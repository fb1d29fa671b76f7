//! Three-lane scroller: dodge barriers, collect fruit, survive as long as
//! possible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LANES: usize = 3;
pub const EPISODE_CAP: usize = 500;
pub const FRUIT_REWARD: f64 = 1.0;
pub const N_ACTIONS: usize = 3;
const LOOKAHEAD: usize = 6;
pub const OBS_DIM: usize = LOOKAHEAD * LANES * 2 + LANES;

pub const LABEL_BARRIER: u8 = 0;
pub const LABEL_FRUIT: u8 = 1;
pub const LABEL_CLEAR: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Fruit,
    Barrier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FruitLevel {
    pub rows: Vec<[Cell; LANES]>,
}

impl FruitLevel {
    /// Lays a random-walk safe path first so every level is survivable, then
    /// scatters barriers and fruit around it.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF2_01_7E);
        let density = rng.random_range(0.15..0.4);
        let fruit = rng.random_range(0.2..0.4);
        let mut rows = Vec::with_capacity(EPISODE_CAP + LOOKAHEAD + 1);
        let mut safe = 1usize;
        for r in 0..EPISODE_CAP + LOOKAHEAD + 1 {
            if r > 0 {
                safe = match rng.random_range(0..4) {
                    0 => safe.saturating_sub(1),
                    1 => (safe + 1).min(LANES - 1),
                    _ => safe,
                };
            }
            let mut row = [Cell::Empty; LANES];
            for (lane, cell) in row.iter_mut().enumerate() {
                // keep the first rows clear so the agent sees the level first
                if r >= 3 && lane != safe && rng.random_bool(density) {
                    *cell = Cell::Barrier;
                } else if r > 0 && rng.random_bool(fruit) {
                    *cell = Cell::Fruit;
                }
            }
            rows.push(row);
        }
        Self { rows }
    }

    pub fn observe(&self, state: &FruitState) -> Vec<f64> {
        let mut obs = vec![0.0; OBS_DIM];
        for k in 0..LOOKAHEAD {
            let row = &self.rows[(state.row + 1 + k).min(self.rows.len() - 1)];
            for (lane, cell) in row.iter().enumerate().take(LANES) {
                let base = (k * LANES + lane) * 2;
                match cell {
                    Cell::Fruit => obs[base] = 1.0,
                    Cell::Barrier => obs[base + 1] = 1.0,
                    Cell::Empty => {}
                }
            }
        }
        obs[LOOKAHEAD * LANES * 2 + state.lane] = 1.0;
        obs
    }

    pub fn label_ahead(&self, state: &FruitState) -> u8 {
        match self.rows[(state.row + 1).min(self.rows.len() - 1)][state.lane] {
            Cell::Barrier => LABEL_BARRIER,
            Cell::Fruit => LABEL_FRUIT,
            Cell::Empty => LABEL_CLEAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FruitState {
    pub row: usize,
    pub lane: usize,
}

impl FruitState {
    pub fn start() -> Self {
        Self { row: 0, lane: 1 }
    }

    pub fn advance(&mut self, level: &FruitLevel, action: usize) -> (f64, bool) {
        self.lane = match action {
            0 => self.lane.saturating_sub(1),
            2 => (self.lane + 1).min(LANES - 1),
            _ => self.lane,
        };
        self.row += 1;
        let reward = match level.rows[self.row][self.lane] {
            Cell::Barrier => return (0.0, true),
            Cell::Fruit => FRUIT_REWARD,
            Cell::Empty => 0.0,
        };
        (reward, self.row >= EPISODE_CAP)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_level_has_a_survivable_path() {
        for seed in 0..30 {
            let lvl = FruitLevel::generate(seed);
            // dynamic programming over reachable lanes
            let mut reach = [false; LANES];
            reach[1] = true;
            for r in 1..=EPISODE_CAP {
                let mut next = [false; LANES];
                for lane in 0..LANES {
                    let from = (lane.saturating_sub(1)..=(lane + 1).min(LANES - 1)).any(|l| reach[l]);
                    next[lane] = from && lvl.rows[r][lane] != Cell::Barrier;
                }
                reach = next;
                assert!(reach.iter().any(|&x| x), "seed {seed} blocked at row {r}");
            }
        }
    }

    #[test]
    fn barrier_ends_episode() {
        let mut lvl = FruitLevel { rows: vec![[Cell::Empty; LANES]; EPISODE_CAP + 10] };
        lvl.rows[1][1] = Cell::Barrier;
        lvl.rows[1][0] = Cell::Fruit;
        let mut s = FruitState::start();
        assert_eq!(s.clone().advance(&lvl, 1), (0.0, true));
        assert_eq!(s.advance(&lvl, 0), (FRUIT_REWARD, false));
    }

    #[test]
    fn cap_ends_episode() {
        let lvl = FruitLevel { rows: vec![[Cell::Empty; LANES]; EPISODE_CAP + 10] };
        let mut s = FruitState { row: EPISODE_CAP - 1, lane: 1 };
        assert_eq!(s.advance(&lvl, 1), (0.0, true));
    }
}
