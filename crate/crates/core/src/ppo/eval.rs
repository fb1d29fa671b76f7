//! Fixed-seed evaluation rollouts with per-step diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dve::confusion;
use crate::envs::{EnvKind, LevelSet, MultiSceneEnv};

use super::net::PolicyValueNet;
use super::rollout::sample_categorical;
use super::PpoError;

const EVAL_STREAM: u64 = 0xE7A1;

/// One evaluated step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalStep {
    pub step: usize,
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub alpha: Vec<f64>,
    pub value: f64,
    pub delta: f64,
    pub obstacle_label: u8,
    pub discrete_state: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalEpisode {
    pub episode: usize,
    /// Index into the evaluated level set.
    pub level_id: usize,
    pub level_seed: u64,
    pub total_reward: f64,
    pub length: usize,
    pub mean_delta: f64,
    pub mean_inv_delta: f64,
    /// Steps that land on a discrete state already visited in this episode.
    pub revisits: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<EvalStep>,
}

/// Aggregate of an evaluation pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub mean_delta: f64,
    pub mean_inv_delta: f64,
    pub mean_revisits: f64,
}

impl EvalSummary {
    pub fn from_episodes(eps: &[EvalEpisode]) -> Self {
        if eps.is_empty() {
            return Self::default();
        }
        let n = eps.len() as f64;
        let mean = |f: fn(&EvalEpisode) -> f64| eps.iter().map(f).sum::<f64>() / n;
        Self {
            episodes: eps.len(),
            mean_reward: mean(|e| e.total_reward),
            mean_episode_length: mean(|e| e.length as f64),
            mean_delta: mean(|e| e.mean_delta),
            mean_inv_delta: mean(|e| e.mean_inv_delta),
            mean_revisits: mean(|e| e.revisits as f64),
        }
    }
}

/// Counts visits to a discrete state that was already seen earlier in the episode.
pub fn count_revisits(states: &[u64]) -> usize {
    let mut seen = std::collections::HashSet::new();
    states.iter().filter(|s| !seen.insert(**s)).count()
}

/// Plays `episodes` episodes, cycling through `levels` in order, with
/// actions sampled from an rng seeded by `seed`.
pub fn evaluate(
    net: &PolicyValueNet,
    kind: &EnvKind,
    levels: &LevelSet,
    episodes: usize,
    seed: u64,
    record_steps: bool,
) -> Result<Vec<EvalEpisode>, PpoError> {
    if episodes == 0 {
        return Err(PpoError::Config(vec!["evaluation needs at least one episode".into()]));
    }
    let mut env = MultiSceneEnv::new(kind.clone(), levels.clone()).map_err(|source| PpoError::Worker { worker: 0, source })?;
    let wrap = |source| PpoError::Worker { worker: 0, source };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EVAL_STREAM);
    let mut out = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let level = episode % levels.len();
        let mut obs = env.reset_to(level).map_err(wrap)?;
        let mut state = net.initial_state();
        let mut ep = EvalEpisode {
            episode,
            level_id: level,
            level_seed: levels.seeds()[level],
            total_reward: 0.0,
            length: 0,
            mean_delta: 0.0,
            mean_inv_delta: 0.0,
            revisits: 0,
            steps: Vec::new(),
        };
        let mut visited = vec![env.current_info().map_err(wrap)?.discrete_state];
        loop {
            let info = env.current_info().map_err(wrap)?;
            let s = net.step(&obs, &state)?;
            let action = sample_categorical(&s.probs, &mut rng);
            let r = env.step(action).map_err(wrap)?;
            let delta = confusion(&s.alpha)?;
            ep.total_reward += r.reward;
            ep.mean_delta += delta;
            ep.mean_inv_delta += 1.0 / delta;
            if record_steps {
                ep.steps.push(EvalStep {
                    step: ep.length,
                    obs: obs.clone(),
                    action,
                    reward: r.reward,
                    alpha: s.alpha.clone(),
                    value: s.value,
                    delta,
                    obstacle_label: info.obstacle_label,
                    discrete_state: info.discrete_state,
                });
            }
            ep.length += 1;
            if r.done {
                break;
            }
            visited.push(r.info.discrete_state);
            obs = r.next_state;
            state = s.state;
        }
        ep.revisits = count_revisits(&visited);
        ep.mean_delta /= ep.length as f64;
        ep.mean_inv_delta /= ep.length as f64;
        out.push(ep);
    }
    Ok(out)
}
