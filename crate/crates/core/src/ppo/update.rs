//! Clipped-surrogate PPO update over recurrent minibatches.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dve::{cc_loss, CCLossConfig};
use crate::numerics::{AdamState, NumericsError, ParamSet, Tape, Tensor, Var};

use super::gae::normalize;
use super::net::{NetArch, PolicyValueNet};
use super::rollout::{RolloutBuffer, Segment};
use super::PpoError;

/// Coefficients of the combined objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub boost_scale: f64,
    pub cc: CCLossConfig,
}

impl LossWeights {
    fn uses_cc(&self) -> bool {
        self.boost_scale > 0.0 && self.cc.is_active()
    }
}

/// Flattened training targets for a set of equal-length segments, in the
/// time-major row order produced by [`NetArch::unroll`].
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub obs_steps: Vec<Tensor>,
    pub keep: Vec<Vec<f64>>,
    pub init_h: Tensor,
    pub init_c: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub trajectory_of_row: Vec<usize>,
    pub trajectories: usize,
}

impl Minibatch {
    /// `advantages[i]` holds the (normalized) advantages of `segments[i]`.
    pub fn build(segments: &[&Segment], advantages: &[&[f64]]) -> Result<Self, PpoError> {
        let first = segments.first().ok_or_else(|| PpoError::Buffer("empty minibatch".into()))?;
        let len = first.len();
        if segments.iter().any(|s| s.len() != len) || len == 0 {
            return Err(PpoError::Buffer("minibatch segments must share a nonzero length".into()));
        }
        let batch = segments.len();
        let hidden = first.init_state.h.len();
        let mut init_h = Vec::with_capacity(batch * hidden);
        let mut init_c = Vec::with_capacity(batch * hidden);
        let mut traj_ids = Vec::with_capacity(batch);
        let mut offset = 0;
        for s in segments {
            init_h.extend_from_slice(&s.init_state.h);
            init_c.extend_from_slice(&s.init_state.c);
            let (ids, count) = s.trajectory_ids();
            traj_ids.push(ids.into_iter().map(|i| i + offset).collect::<Vec<_>>());
            offset += count;
        }
        let rows = batch * len;
        let mut mb = Self {
            obs_steps: Vec::with_capacity(len),
            keep: Vec::with_capacity(len),
            init_h: Tensor::matrix(batch, hidden, init_h)?,
            init_c: Tensor::matrix(batch, hidden, init_c)?,
            actions: Vec::with_capacity(rows),
            old_log_probs: Vec::with_capacity(rows),
            advantages: Vec::with_capacity(rows),
            returns: Vec::with_capacity(rows),
            trajectory_of_row: Vec::with_capacity(rows),
            trajectories: offset,
        };
        for t in 0..len {
            let obs: Vec<Vec<f64>> = segments.iter().map(|s| s.obs[t].clone()).collect();
            mb.obs_steps.push(Tensor::from_rows(&obs)?);
            mb.keep.push(segments.iter().map(|s| if s.starts[t] { 0.0 } else { 1.0 }).collect());
            for (b, s) in segments.iter().enumerate() {
                mb.actions.push(s.actions[t]);
                mb.old_log_probs.push(s.log_probs[t]);
                mb.advantages.push(advantages[b][t]);
                mb.returns.push(s.returns[t]);
                mb.trajectory_of_row.push(traj_ids[b][t]);
            }
        }
        Ok(mb)
    }

    pub fn rows(&self) -> usize {
        self.actions.len()
    }
}

/// Tape nodes of each loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub policy: Var,
    pub value: Var,
    pub entropy: Var,
    pub cc: Option<Var>,
    pub total: Var,
}

fn column(values: &[f64]) -> Result<Tensor, NumericsError> {
    Tensor::matrix(values.len(), 1, values.to_vec())
}

/// `-mean(min(r A, clip(r) A))` with `r = exp(logp - old_logp)`.
pub fn policy_loss(
    tape: &mut Tape,
    log_probs: Var,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
) -> Result<Var, NumericsError> {
    let old = tape.constant(column(old_log_probs)?);
    let adv = tape.constant(column(advantages)?);
    let diff = tape.sub(log_probs, old)?;
    let ratio = tape.exp(diff);
    let unclipped = tape.mul(ratio, adv)?;
    let clipped_ratio = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let clipped = tape.mul(clipped_ratio, adv)?;
    let objective = tape.min(unclipped, clipped)?;
    let mean = tape.mean(objective)?;
    Ok(tape.scale(mean, -1.0))
}

/// `mean((value - target)²)`.
pub fn value_loss(tape: &mut Tape, value: Var, targets: &[f64]) -> Result<Var, NumericsError> {
    let target = tape.constant(column(targets)?);
    let diff = tape.sub(value, target)?;
    let sq = tape.square(diff);
    tape.mean(sq)
}

/// Mean categorical entropy of the policy rows.
pub fn entropy(tape: &mut Tape, log_policy: Var) -> Result<Var, NumericsError> {
    let rows = tape.value(log_policy).rows();
    let probs = tape.exp(log_policy);
    let plogp = tape.mul(probs, log_policy)?;
    let total = tape.sum(plogp);
    Ok(tape.scale(total, -1.0 / rows as f64))
}

/// Records the full objective for one minibatch.
pub fn build_losses(
    tape: &mut Tape,
    arch: &NetArch,
    params: &ParamSet,
    mb: &Minibatch,
    weights: &LossWeights,
) -> Result<LossTerms, PpoError> {
    let bound = tape.bind(params);
    let out = arch.unroll(tape, &bound, mb.obs_steps.clone(), &mb.keep, mb.init_h.clone(), mb.init_c.clone())?;
    let log_policy = tape.log_softmax_rows(out.logits);
    let taken = tape.gather_cols(log_policy, &mb.actions)?;
    let policy = policy_loss(tape, taken, &mb.old_log_probs, &mb.advantages, weights.clip)?;
    let value = value_loss(tape, out.value, &mb.returns)?;
    let ent = entropy(tape, log_policy)?;

    let scaled_value = tape.scale(value, weights.value_coef);
    let scaled_ent = tape.scale(ent, -weights.entropy_coef);
    let mut total = tape.add(policy, scaled_value)?;
    total = tape.add(total, scaled_ent)?;

    let mut cc = None;
    if weights.uses_cc() {
        let alpha = if weights.cc.assignments_only {
            let latent = tape.detach(out.latent);
            arch.head.alpha(tape, &bound, latent)?
        } else {
            out.alpha
        };
        let term = cc_loss(
            tape,
            alpha,
            &mb.trajectory_of_row,
            mb.trajectories,
            weights.cc.k1,
            weights.cc.k2,
            weights.cc.eps_log,
        )?;
        let scaled = tape.scale(term, weights.boost_scale);
        total = tape.add(total, scaled)?;
        cc = Some(term);
    }
    Ok(LossTerms { policy, value, entropy: ent, cc, total })
}

/// Averages over all minibatch steps of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub cc_loss: f64,
    pub grad_norm: f64,
    pub optimizer_steps: usize,
}

/// Settings of [`ppo_update`] that do not change between updates.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSettings {
    pub epochs: usize,
    pub minibatches: usize,
    pub max_grad_norm: f64,
}

/// Runs `epochs × minibatches` Adam steps. Whole segments go into each
/// minibatch so the recurrent unroll starts from stored hidden states.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyValueNet,
    adam: &mut AdamState,
    buffer: &RolloutBuffer,
    weights: &LossWeights,
    settings: &UpdateSettings,
    rng: &mut R,
    step: u64,
) -> Result<UpdateStats, PpoError> {
    if !buffer.is_ready() {
        return Err(PpoError::Buffer("advantages not computed".into()));
    }
    if buffer.segments.is_empty() {
        return Err(PpoError::Buffer("empty rollout buffer".into()));
    }
    let mut flat: Vec<f64> = buffer.segments.iter().flat_map(|s| s.advantages.iter().copied()).collect();
    normalize(&mut flat);
    let mut norm_adv = Vec::with_capacity(buffer.segments.len());
    let mut offset = 0;
    for s in &buffer.segments {
        norm_adv.push(flat[offset..offset + s.len()].to_vec());
        offset += s.len();
    }

    let n_seg = buffer.segments.len();
    let groups = settings.minibatches.clamp(1, n_seg);
    let mut order: Vec<usize> = (0..n_seg).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..settings.epochs {
        order.shuffle(rng);
        for g in 0..groups {
            let idx: Vec<usize> = order.iter().copied().skip(g).step_by(groups).collect();
            let segs: Vec<&Segment> = idx.iter().map(|&i| &buffer.segments[i]).collect();
            let advs: Vec<&[f64]> = idx.iter().map(|&i| norm_adv[i].as_slice()).collect();
            let mb = Minibatch::build(&segs, &advs)?;
            let mut tape = Tape::new();
            let terms = build_losses(&mut tape, &net.arch, &net.params, &mb, weights)?;
            let values = [
                ("policy", tape.value(terms.policy).item()),
                ("value", tape.value(terms.value).item()),
                ("entropy", tape.value(terms.entropy).item()),
                ("cc", terms.cc.map_or(0.0, |v| tape.value(v).item())),
                ("total", tape.value(terms.total).item()),
            ];
            if let Some((term, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
                return Err(PpoError::NonFinite { step, term: (*term).to_string() });
            }
            let mut grads = tape.backward(terms.total, &net.params)?;
            if !grads.is_finite() {
                return Err(PpoError::NonFinite { step, term: "gradient".into() });
            }
            let norm = grads.global_norm();
            if settings.max_grad_norm > 0.0 && norm > settings.max_grad_norm {
                grads.scale(settings.max_grad_norm / norm);
            }
            adam.step(&mut net.params, &grads)?;
            stats.policy_loss += values[0].1;
            stats.value_loss += values[1].1;
            stats.entropy += values[2].1;
            stats.cc_loss += values[3].1;
            stats.grad_norm += norm;
            stats.optimizer_steps += 1;
        }
    }
    let k = stats.optimizer_steps.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.cc_loss /= k;
    stats.grad_norm /= k;
    Ok(stats)
}
