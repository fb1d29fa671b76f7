use rand::Rng;

use crate::numerics::{softmax, Linear, NumericsError, ParamSet, Tape, Var};

use super::metrics::combine;
use super::DveError;

/// Clustered critic: assignment logits and per-cluster means read from the
/// same latent vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterHead {
    pub n_clusters: usize,
    pub assign: Linear,
    pub means: Linear,
}

/// Tape nodes produced by [`ClusterHead::forward`].
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    /// `[B, N_b]` assignment probabilities.
    pub alpha: Var,
    /// `[B, N_b]` cluster means.
    pub means: Var,
    /// `[B, 1]` combined value.
    pub value: Var,
}

/// Plain evaluation of a single latent.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadEval {
    pub alpha: Vec<f64>,
    pub means: Vec<f64>,
    pub value: f64,
}

impl ClusterHead {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        rng: &mut R,
        latent_dim: usize,
        n_clusters: usize,
    ) -> Self {
        let assign = Linear::new(params, rng, "head.assign", latent_dim, n_clusters, 0.5);
        let means = Linear::new(params, rng, "head.means", latent_dim, n_clusters, 1.0);
        Self { n_clusters, assign, means }
    }

    /// Assignment probabilities only; used when the loss should not reach the latent.
    pub fn alpha(&self, tape: &mut Tape, bound: &[Var], latent: Var) -> Result<Var, NumericsError> {
        let logits = self.assign.forward(tape, bound, latent)?;
        Ok(tape.softmax_rows(logits))
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], latent: Var) -> Result<HeadOutput, NumericsError> {
        let alpha = self.alpha(tape, bound, latent)?;
        let means = self.means.forward(tape, bound, latent)?;
        let weighted = tape.mul(alpha, means)?;
        let value = tape.sum_rows(weighted);
        Ok(HeadOutput { alpha, means, value })
    }

    pub fn evaluate(&self, params: &ParamSet, latent: &[f64]) -> Result<HeadEval, DveError> {
        let logits = self.assign.apply(params, latent)?;
        let alpha = softmax(&logits)?;
        let means = self.means.apply(params, latent)?;
        let value = combine(&alpha, &means)?;
        Ok(HeadEval { alpha, means, value })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tape_and_plain_evaluation_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParamSet::new();
        let head = ClusterHead::new(&mut params, &mut rng, 4, 3);
        let latent = [0.2, -0.4, 0.9, 0.1];
        let plain = head.evaluate(&params, &latent).unwrap();

        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let x = tape.constant(Tensor::matrix(1, 4, latent.to_vec()).unwrap());
        let out = head.forward(&mut tape, &bound, x).unwrap();
        assert_abs_diff_eq!(tape.value(out.value).item(), plain.value, epsilon = 1e-14);
        let alpha = tape.value(out.alpha).data();
        assert_abs_diff_eq!(alpha.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let lo = plain.means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = plain.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(plain.value >= lo && plain.value <= hi);
    }

    #[test]
    fn single_cluster_value_is_its_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = ParamSet::new();
        let head = ClusterHead::new(&mut params, &mut rng, 3, 1);
        let e = head.evaluate(&params, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.alpha, vec![1.0]);
        assert_eq!(e.value, e.means[0]);
    }
}
