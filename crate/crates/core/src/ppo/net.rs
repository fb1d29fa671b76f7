//! Recurrent policy/value network: observation encoder, LSTM trunk, policy
//! logits and a clustered critic reading the same latent.

use rand::Rng;

use crate::dve::ClusterHead;
use crate::numerics::{softmax, Linear, LstmCell, LstmState, NumericsError, ParamSet, Tape, Tensor, Var};

use super::PpoError;

/// Parameter layout of a [`PolicyValueNet`]; cheap to copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetArch {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub encoder: Linear,
    pub lstm: LstmCell,
    pub policy: Linear,
    pub head: ClusterHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValueNet {
    pub arch: NetArch,
    pub params: ParamSet,
}

/// Result of one plain forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub means: Vec<f64>,
    pub value: f64,
    pub state: LstmState,
}

/// Tape nodes for a batch of equal-length sequences. Rows are time-major:
/// row `t * batch + b` is step `t` of sequence `b`.
#[derive(Debug, Clone, Copy)]
pub struct SequenceOutput {
    pub latent: Var,
    pub logits: Var,
    pub alpha: Var,
    pub means: Var,
    pub value: Var,
}

impl PolicyValueNet {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        obs_dim: usize,
        n_actions: usize,
        encoder_width: usize,
        hidden: usize,
        n_clusters: usize,
    ) -> Self {
        let mut params = ParamSet::new();
        let encoder = Linear::new(&mut params, rng, "encoder", obs_dim, encoder_width, 1.0);
        let lstm = LstmCell::new(&mut params, rng, "lstm", encoder_width, hidden);
        let policy = Linear::new(&mut params, rng, "policy", hidden, n_actions, 0.1);
        let head = ClusterHead::new(&mut params, rng, hidden, n_clusters);
        Self { arch: NetArch { obs_dim, n_actions, encoder, lstm, policy, head }, params }
    }

    pub fn hidden(&self) -> usize {
        self.arch.lstm.hidden
    }

    pub fn n_clusters(&self) -> usize {
        self.arch.head.n_clusters
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.hidden())
    }

    pub fn step(&self, obs: &[f64], state: &LstmState) -> Result<StepOutput, PpoError> {
        self.arch.step(&self.params, obs, state)
    }
}

impl NetArch {
    /// Plain single-step evaluation with explicit parameters.
    pub fn step(&self, params: &ParamSet, obs: &[f64], state: &LstmState) -> Result<StepOutput, PpoError> {
        let enc: Vec<f64> = self.encoder.apply(params, obs)?.into_iter().map(f64::tanh).collect();
        let next = self.lstm.step(params, &enc, state)?;
        let logits = self.policy.apply(params, &next.h)?;
        let probs = softmax(&logits)?;
        let head = self.head.evaluate(params, &next.h)?;
        Ok(StepOutput { probs, alpha: head.alpha, means: head.means, value: head.value, state: next })
    }

    /// Unrolls `batch` sequences of `obs_steps.len()` steps on the tape.
    ///
    /// `obs_steps[t]` is a `[batch, obs_dim]` tensor, `keep[t][b]` is 0 where the
    /// hidden state must be zeroed before step `t` and 1 elsewhere.
    pub fn unroll(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        obs_steps: Vec<Tensor>,
        keep: &[Vec<f64>],
        init_h: Tensor,
        init_c: Tensor,
    ) -> Result<SequenceOutput, NumericsError> {
        let batch = init_h.rows();
        let mut h = tape.constant(init_h);
        let mut c = tape.constant(init_c);
        let mut outputs = Vec::with_capacity(obs_steps.len());
        for (t, obs) in obs_steps.into_iter().enumerate() {
            if keep[t].iter().any(|&k| k != 1.0) {
                let mask = tape.constant(Tensor::matrix(batch, 1, keep[t].clone())?);
                h = tape.mul_col(h, mask)?;
                c = tape.mul_col(c, mask)?;
            }
            let x = tape.constant(obs);
            let pre = self.encoder.forward(tape, bound, x)?;
            let enc = tape.tanh(pre);
            let (h_next, c_next) = self.lstm.forward(tape, bound, enc, h, c)?;
            outputs.push(h_next);
            h = h_next;
            c = c_next;
        }
        let latent = tape.concat_rows(&outputs)?;
        let logits = self.policy.forward(tape, bound, latent)?;
        let head = self.head.forward(tape, bound, latent)?;
        Ok(SequenceOutput { latent, logits, alpha: head.alpha, means: head.means, value: head.value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64, clusters: usize) -> PolicyValueNet {
        PolicyValueNet::new(&mut ChaCha8Rng::seed_from_u64(seed), 5, 3, 6, 4, clusters)
    }

    #[test]
    fn unroll_matches_plain_steps() {
        let net = net(1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq: Vec<Vec<f64>> = (0..6).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        // sequence 1 resets before step 3
        let keep: Vec<Vec<f64>> = (0..6).map(|t| vec![1.0, if t == 3 { 0.0 } else { 1.0 }]).collect();
        let obs: Vec<Tensor> = seq
            .iter()
            .map(|o| Tensor::from_rows(&[o.clone(), o.iter().map(|v| -v).collect()]).unwrap())
            .collect();
        let mut tape = Tape::new();
        let bound = tape.bind(&net.params);
        let zeros = Tensor::zeros(&[2, 4]);
        let out = net.arch.unroll(&mut tape, &bound, obs, &keep, zeros.clone(), zeros).unwrap();

        for b in 0..2 {
            let mut state = net.initial_state();
            for (t, o) in seq.iter().enumerate() {
                if keep[t][b] == 0.0 {
                    state = net.initial_state();
                }
                let x: Vec<f64> = if b == 0 { o.clone() } else { o.iter().map(|v| -v).collect() };
                let s = net.step(&x, &state).unwrap();
                let row = t * 2 + b;
                assert_abs_diff_eq!(tape.value(out.value).data()[row], s.value, epsilon = 1e-12);
                for (j, a) in s.alpha.iter().enumerate() {
                    assert_abs_diff_eq!(tape.value(out.alpha).row(row)[j], *a, epsilon = 1e-12);
                }
                let logits = tape.value(out.logits).row(row).to_vec();
                let probs = softmax(&logits).unwrap();
                for (p, q) in probs.iter().zip(&s.probs) {
                    assert_abs_diff_eq!(p, q, epsilon = 1e-12);
                }
                state = s.state;
            }
        }
    }

    #[test]
    fn single_cluster_net_value_is_the_mean() {
        let net = net(4, 1);
        let s = net.step(&[0.1, 0.2, 0.3, 0.4, 0.5], &net.initial_state()).unwrap();
        assert_eq!(s.alpha, vec![1.0]);
        assert_eq!(s.value, s.means[0]);
    }

    #[test]
    fn wrong_observation_size_is_error() {
        let net = net(0, 2);
        assert!(net.step(&[0.0; 3], &net.initial_state()).is_err());
    }
}
