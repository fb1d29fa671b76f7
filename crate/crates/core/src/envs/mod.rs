//! Multi-scene environments: a seeded set of levels sharing one action space,
//! one level drawn uniformly per episode and hidden from the agent.

pub mod chain;
pub mod corridor;
pub mod fruit;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use chain::ChainParams;

use chain::{ChainLevel, ChainState};
use corridor::{CorridorLevel, CorridorState};
use fruit::{FruitLevel, FruitState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("level set is empty")]
    NoLevels,
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("step called before reset")]
    NotReset,
    #[error("action {action} out of range 0..{n_actions}")]
    InvalidAction { action: usize, n_actions: usize },
    #[error("level {0} out of range")]
    InvalidLevel(usize),
    #[error("true value is only defined for the chain-oracle environment")]
    NotOracle,
    #[error("unknown environment '{0}'")]
    UnknownEnv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvKind {
    CorridorCoin,
    FruitLine,
    ChainOracle(ChainParams),
}

impl EnvKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvKind::CorridorCoin => "corridor-coin",
            EnvKind::FruitLine => "fruit-line",
            EnvKind::ChainOracle(_) => "chain-oracle",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            EnvKind::CorridorCoin => corridor::OBS_DIM,
            EnvKind::FruitLine => fruit::OBS_DIM,
            EnvKind::ChainOracle(p) => p.obs_dim(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            EnvKind::CorridorCoin => corridor::N_ACTIONS,
            EnvKind::FruitLine => fruit::N_ACTIONS,
            EnvKind::ChainOracle(_) => chain::N_ACTIONS,
        }
    }

    pub fn episode_cap(&self) -> usize {
        match self {
            EnvKind::CorridorCoin => corridor::EPISODE_CAP,
            EnvKind::FruitLine => fruit::EPISODE_CAP,
            EnvKind::ChainOracle(p) => p.episode_cap(),
        }
    }

    /// Number of distinct obstacle labels reported in [`StepInfo`].
    pub fn label_count(&self) -> usize {
        match self {
            EnvKind::CorridorCoin => corridor::LABEL_COUNT,
            EnvKind::FruitLine => 3,
            EnvKind::ChainOracle(p) => p.reward_means.len().max(1),
        }
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "corridor-coin" => Ok(EnvKind::CorridorCoin),
            "fruit-line" => Ok(EnvKind::FruitLine),
            "chain-oracle" => Ok(EnvKind::ChainOracle(ChainParams::default())),
            other => Err(EnvError::UnknownEnv(other.to_string())),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Seeds of the levels that make up one environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSet {
    seeds: Vec<u64>,
}

impl LevelSet {
    pub fn from_seeds(seeds: Vec<u64>) -> Self {
        Self { seeds }
    }

    /// `count` consecutive seeds starting at `base_seed`.
    pub fn from_count(count: usize, base_seed: u64) -> Self {
        Self { seeds: (0..count as u64).map(|i| base_seed.wrapping_add(i)).collect() }
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn overlaps(&self, other: &LevelSet) -> bool {
        self.seeds.iter().any(|s| other.seeds.contains(s))
    }
}

/// Analysis side channel attached to every transition. Never fed to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub level_id: usize,
    pub obstacle_label: u8,
    pub discrete_state: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Summary of one finished episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReturn {
    pub discounted: f64,
    pub total: f64,
    pub length: usize,
}

impl EpisodeReturn {
    pub fn from_rewards(rewards: &[f64], gamma: f64) -> Option<Self> {
        if rewards.is_empty() {
            return None;
        }
        let mut discounted = 0.0;
        let mut scale = 1.0;
        for r in rewards {
            discounted += scale * r;
            scale *= gamma;
        }
        Some(Self { discounted, total: rewards.iter().sum(), length: rewards.len() })
    }
}

#[derive(Debug, Clone)]
enum Levels {
    Corridor(Vec<CorridorLevel>),
    Fruit(Vec<FruitLevel>),
    Chain(ChainParams, Vec<ChainLevel>),
}

#[derive(Debug, Clone)]
enum EpisodeState {
    Corridor(CorridorState),
    Fruit(FruitState),
    Chain(ChainState),
}

#[derive(Debug, Clone)]
struct Active {
    level: usize,
    state: EpisodeState,
    done: bool,
}

/// One environment instance over a fixed level set.
#[derive(Debug, Clone)]
pub struct MultiSceneEnv {
    kind: EnvKind,
    levels: LevelSet,
    data: Levels,
    active: Option<Active>,
}

impl MultiSceneEnv {
    pub fn new(kind: EnvKind, levels: LevelSet) -> Result<Self, EnvError> {
        if levels.is_empty() {
            return Err(EnvError::NoLevels);
        }
        let data = match &kind {
            EnvKind::CorridorCoin => {
                Levels::Corridor(levels.seeds().iter().map(|&s| CorridorLevel::generate(s)).collect())
            }
            EnvKind::FruitLine => {
                Levels::Fruit(levels.seeds().iter().map(|&s| FruitLevel::generate(s)).collect())
            }
            EnvKind::ChainOracle(p) => Levels::Chain(
                p.clone(),
                levels.seeds().iter().map(|&s| ChainLevel::generate(s, p)).collect(),
            ),
        };
        Ok(Self { kind, levels, data, active: None })
    }

    /// Builds directly from corridor layouts; used for crafted scenarios.
    pub fn from_corridor_levels(levels: Vec<CorridorLevel>) -> Result<Self, EnvError> {
        if levels.is_empty() {
            return Err(EnvError::NoLevels);
        }
        let set = LevelSet::from_count(levels.len(), 0);
        Ok(Self { kind: EnvKind::CorridorCoin, levels: set, data: Levels::Corridor(levels), active: None })
    }

    pub fn kind(&self) -> &EnvKind {
        &self.kind
    }

    pub fn level_set(&self) -> &LevelSet {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.kind.obs_dim()
    }

    pub fn n_actions(&self) -> usize {
        self.kind.n_actions()
    }

    /// Starts an episode on a uniformly drawn level. The level index is
    /// returned for logging only.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(Vec<f64>, usize), EnvError> {
        let level = rng.random_range(0..self.level_count());
        let obs = self.reset_to(level)?;
        Ok((obs, level))
    }

    pub fn reset_to(&mut self, level: usize) -> Result<Vec<f64>, EnvError> {
        if level >= self.level_count() {
            return Err(EnvError::InvalidLevel(level));
        }
        let state = match &self.data {
            Levels::Corridor(_) => EpisodeState::Corridor(CorridorState::start()),
            Levels::Fruit(_) => EpisodeState::Fruit(FruitState::start()),
            Levels::Chain(..) => EpisodeState::Chain(ChainState::start()),
        };
        self.active = Some(Active { level, state, done: false });
        Ok(self.observe())
    }

    fn observe(&self) -> Vec<f64> {
        let active = self.active.as_ref().expect("active episode");
        match (&self.data, &active.state) {
            (Levels::Corridor(l), EpisodeState::Corridor(s)) => l[active.level].observe(s.pos, s.t),
            (Levels::Fruit(l), EpisodeState::Fruit(s)) => l[active.level].observe(s),
            (Levels::Chain(p, l), EpisodeState::Chain(s)) => l[active.level].observe(p, s.pos),
            _ => unreachable!("episode state matches level data"),
        }
    }

    fn info(&self) -> StepInfo {
        let active = self.active.as_ref().expect("active episode");
        let (obstacle_label, discrete_state) = match (&self.data, &active.state) {
            (Levels::Corridor(l), EpisodeState::Corridor(s)) => (l[active.level].label_ahead(s.pos), s.pos as u64),
            (Levels::Fruit(l), EpisodeState::Fruit(s)) => {
                (l[active.level].label_ahead(s), (s.row * fruit::LANES + s.lane) as u64)
            }
            (Levels::Chain(_, l), EpisodeState::Chain(s)) => (l[active.level].component as u8, s.pos as u64),
            _ => unreachable!("episode state matches level data"),
        };
        StepInfo { level_id: active.level, obstacle_label, discrete_state }
    }

    /// Side-channel info for the current (pre-step) state.
    pub fn current_info(&self) -> Result<StepInfo, EnvError> {
        self.active.as_ref().ok_or(EnvError::NotReset)?;
        Ok(self.info())
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let n_actions = self.n_actions();
        if action >= n_actions {
            return Err(EnvError::InvalidAction { action, n_actions });
        }
        let active = self.active.as_mut().ok_or(EnvError::NotReset)?;
        if active.done {
            return Err(EnvError::EpisodeDone);
        }
        let (reward, done) = match (&self.data, &mut active.state) {
            (Levels::Corridor(l), EpisodeState::Corridor(s)) => s.advance(&l[active.level], action),
            (Levels::Fruit(l), EpisodeState::Fruit(s)) => s.advance(&l[active.level], action),
            (Levels::Chain(p, l), EpisodeState::Chain(s)) => s.advance(&l[active.level], p, action),
            _ => unreachable!("episode state matches level data"),
        };
        active.done = done;
        Ok(StepResult { next_state: self.observe(), reward, done, info: self.info() })
    }

    /// Analytic value of chain cell `pos` in `level` under the always-advance policy.
    pub fn true_value(&self, pos: usize, level: usize, gamma: f64) -> Result<f64, EnvError> {
        match &self.data {
            Levels::Chain(p, l) => {
                let lvl = l.get(level).ok_or(EnvError::InvalidLevel(level))?;
                if pos >= p.length {
                    return Err(EnvError::InvalidLevel(pos));
                }
                Ok(lvl.true_value(p, pos, gamma))
            }
            _ => Err(EnvError::NotOracle),
        }
    }

    /// Chain observation for `(pos, level)` without running an episode.
    pub fn chain_observation(&self, pos: usize, level: usize) -> Result<Vec<f64>, EnvError> {
        match &self.data {
            Levels::Chain(p, l) => Ok(l.get(level).ok_or(EnvError::InvalidLevel(level))?.observe(p, pos)),
            _ => Err(EnvError::NotOracle),
        }
    }

    pub fn chain_level(&self, level: usize) -> Option<&ChainLevel> {
        match &self.data {
            Levels::Chain(_, l) => l.get(level),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use corridor::Hazard;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_level_set_is_error() {
        let err = MultiSceneEnv::new(EnvKind::CorridorCoin, LevelSet::from_seeds(vec![])).unwrap_err();
        assert_eq!(err, EnvError::NoLevels);
    }

    #[test]
    fn single_level_always_chosen() {
        let mut env = MultiSceneEnv::new(EnvKind::FruitLine, LevelSet::from_seeds(vec![42])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(env.reset(&mut rng).unwrap().1, 0);
        }
    }

    #[test]
    fn reset_sequence_is_deterministic() {
        let run = || {
            let mut env = MultiSceneEnv::new(EnvKind::CorridorCoin, LevelSet::from_count(50, 9)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            (0..30).map(|_| env.reset(&mut rng).unwrap().1).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn step_errors() {
        let mut env = MultiSceneEnv::new(EnvKind::ChainOracle(ChainParams::default()), LevelSet::from_count(3, 0)).unwrap();
        assert_eq!(env.step(0).unwrap_err(), EnvError::NotReset);
        env.reset_to(0).unwrap();
        assert!(matches!(env.step(5), Err(EnvError::InvalidAction { .. })));
        loop {
            if env.step(chain::ACTION_ADVANCE).unwrap().done {
                break;
            }
        }
        assert_eq!(env.step(0).unwrap_err(), EnvError::EpisodeDone);
    }

    #[test]
    fn true_value_only_on_oracle() {
        let env = MultiSceneEnv::new(EnvKind::CorridorCoin, LevelSet::from_count(3, 0)).unwrap();
        assert_eq!(env.true_value(0, 0, 0.9).unwrap_err(), EnvError::NotOracle);
    }

    #[test]
    fn identical_local_layout_gives_identical_observations() {
        // same hazard near the agent, different far-away layouts
        let a = CorridorLevel { hazards: vec![(4, Hazard::Pit), (15, Hazard::Saw { phase: 0 })] };
        let b = CorridorLevel { hazards: vec![(4, Hazard::Pit), (18, Hazard::Crawler { phase: 1 })] };
        let mut env = MultiSceneEnv::from_corridor_levels(vec![a, b]).unwrap();
        let oa = env.reset_to(0).unwrap();
        let ra = env.step(corridor::ACTION_RIGHT).unwrap();
        let ob = env.reset_to(1).unwrap();
        let rb = env.step(corridor::ACTION_RIGHT).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(ra.next_state, rb.next_state);
        assert_ne!(ra.info.level_id, rb.info.level_id);
    }

    #[test]
    fn episode_return_bounds() {
        let r = EpisodeReturn::from_rewards(&[1.0, 0.0, 2.0], 0.9).unwrap();
        assert_eq!(r.length, 3);
        assert_eq!(r.total, 3.0);
        assert!((r.discounted - (1.0 + 0.81 * 2.0)).abs() < 1e-12);
        assert!(r.discounted <= r.total);
        assert!(EpisodeReturn::from_rewards(&[], 0.9).is_none());
    }
}
