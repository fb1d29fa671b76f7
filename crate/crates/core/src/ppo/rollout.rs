//! Rollout workers and the per-update trajectory buffer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{EnvKind, LevelSet, MultiSceneEnv};
use crate::numerics::LstmState;

use super::gae::compute_gae;
use super::net::PolicyValueNet;
use super::PpoError;

/// One worker's contiguous slice of experience for a single update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub worker: usize,
    /// LSTM state before the first step.
    pub init_state: LstmState,
    pub obs: Vec<Vec<f64>>,
    /// True where the step opens a new episode; the hidden state was zeroed before it.
    pub starts: Vec<bool>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub alphas: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub level_ids: Vec<usize>,
    pub labels: Vec<u8>,
    pub discrete: Vec<u64>,
    /// Value of the state after the last step, from the carried hidden state.
    pub bootstrap: Option<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Trajectory index of every step; a new one begins at each episode start.
    pub fn trajectory_ids(&self) -> (Vec<usize>, usize) {
        let mut ids = Vec::with_capacity(self.len());
        let mut current = 0;
        for (t, &start) in self.starts.iter().enumerate() {
            if start && t > 0 {
                current += 1;
            }
            ids.push(current);
        }
        let count = if ids.is_empty() { 0 } else { current + 1 };
        (ids, count)
    }

    /// Assignment vectors grouped by trajectory piece.
    pub fn alpha_trajectories(&self) -> Vec<Vec<Vec<f64>>> {
        let (ids, count) = self.trajectory_ids();
        let mut out = vec![Vec::new(); count];
        for (alpha, id) in self.alphas.iter().zip(ids) {
            out[id].push(alpha.clone());
        }
        out
    }
}

/// Summary of an episode that finished during collection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub worker: usize,
    pub level_id: usize,
    pub total_reward: f64,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RolloutBuffer {
    /// Ordered by worker id.
    pub segments: Vec<Segment>,
    pub episodes: Vec<EpisodeStats>,
}

impl RolloutBuffer {
    pub fn steps(&self) -> usize {
        self.segments.iter().map(Segment::len).sum()
    }

    /// Fills advantages and value targets of every segment.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<(), PpoError> {
        for seg in &mut self.segments {
            let (adv, ret) = compute_gae(&seg.rewards, &seg.values, &seg.dones, seg.bootstrap, gamma, lambda)?;
            seg.advantages = adv;
            seg.returns = ret;
        }
        Ok(())
    }

    pub fn is_ready(&self) -> bool {
        self.segments.iter().all(|s| s.advantages.len() == s.len() && s.returns.len() == s.len())
    }
}

/// Draws an index from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Environment, rng stream and carried recurrent state of one rollout worker.
#[derive(Debug, Clone)]
pub struct Worker {
    pub id: usize,
    env: MultiSceneEnv,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    state: LstmState,
    fresh: bool,
    ep_reward: f64,
    ep_len: usize,
    hidden: usize,
}

impl Worker {
    /// The rng stream is derived from `(seed, id, epoch)`; `epoch` separates
    /// resumed runs from the original stream.
    pub fn new(id: usize, kind: &EnvKind, levels: &LevelSet, seed: u64, epoch: u64, hidden: usize) -> Result<Self, PpoError> {
        let mut env = MultiSceneEnv::new(kind.clone(), levels.clone()).map_err(|source| PpoError::Worker { worker: id, source })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.set_stream(id as u64 + 1);
        let (obs, _) = env.reset(&mut rng).map_err(|source| PpoError::Worker { worker: id, source })?;
        Ok(Self { id, env, rng, obs, state: LstmState::zeros(hidden), fresh: true, ep_reward: 0.0, ep_len: 0, hidden })
    }

    /// Runs `length` steps with a frozen policy.
    pub fn collect(&mut self, net: &PolicyValueNet, length: usize) -> Result<(Segment, Vec<EpisodeStats>), PpoError> {
        let wrap = |source| PpoError::Worker { worker: self.id, source };
        let mut seg = Segment { worker: self.id, init_state: self.state.clone(), ..Segment::default() };
        let mut episodes = Vec::new();
        for _ in 0..length {
            let info = self.env.current_info().map_err(wrap)?;
            let out = net.step(&self.obs, &self.state)?;
            let action = sample_categorical(&out.probs, &mut self.rng);
            let result = self.env.step(action).map_err(wrap)?;

            seg.obs.push(std::mem::take(&mut self.obs));
            seg.starts.push(self.fresh);
            seg.actions.push(action);
            seg.log_probs.push(out.probs[action].max(f64::MIN_POSITIVE).ln());
            seg.rewards.push(result.reward);
            seg.dones.push(result.done);
            seg.alphas.push(out.alpha);
            seg.means.push(out.means);
            seg.values.push(out.value);
            seg.level_ids.push(info.level_id);
            seg.labels.push(info.obstacle_label);
            seg.discrete.push(info.discrete_state);

            self.ep_reward += result.reward;
            self.ep_len += 1;
            if result.done {
                episodes.push(EpisodeStats {
                    worker: self.id,
                    level_id: info.level_id,
                    total_reward: self.ep_reward,
                    length: self.ep_len,
                });
                let (obs, _) = self.env.reset(&mut self.rng).map_err(wrap)?;
                self.obs = obs;
                self.state = LstmState::zeros(self.hidden);
                self.fresh = true;
                self.ep_reward = 0.0;
                self.ep_len = 0;
            } else {
                self.obs = result.next_state;
                self.state = out.state;
                self.fresh = false;
            }
        }
        seg.bootstrap = Some(net.step(&self.obs, &self.state)?.value);
        Ok((seg, episodes))
    }
}

/// Collects one segment per worker and merges them in worker-id order.
pub fn collect_rollouts(net: &PolicyValueNet, workers: &mut [Worker], segment_length: usize) -> Result<RolloutBuffer, PpoError> {
    let results = run_workers(net, workers, segment_length);
    let mut buffer = RolloutBuffer::default();
    for r in results {
        let (seg, eps) = r?;
        buffer.segments.push(seg);
        buffer.episodes.extend(eps);
    }
    Ok(buffer)
}

type WorkerResult = Result<(Segment, Vec<EpisodeStats>), PpoError>;

#[cfg(not(target_arch = "wasm32"))]
fn run_workers(net: &PolicyValueNet, workers: &mut [Worker], segment_length: usize) -> Vec<WorkerResult> {
    if workers.len() == 1 {
        return vec![workers[0].collect(net, segment_length)];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .iter_mut()
            .map(|w| {
                let local = net.clone();
                scope.spawn(move || w.collect(&local, segment_length))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
    })
}

#[cfg(target_arch = "wasm32")]
fn run_workers(net: &PolicyValueNet, workers: &mut [Worker], segment_length: usize) -> Vec<WorkerResult> {
    workers.iter_mut().map(|w| w.collect(net, segment_length)).collect()
}
