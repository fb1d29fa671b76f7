use rand::Rng;

use super::tape::sigmoid;
use super::{init_uniform, NumericsError, ParamSet, Tape, Tensor, Var};

/// Affine map `x Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        gain: f64,
    ) -> Self {
        let weight = params.push(
            format!("{name}.weight"),
            init_uniform(rng, &[out_dim, in_dim], in_dim, gain),
        );
        let bias = params.push(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, NumericsError> {
        let xw = tape.matmul_t(x, bound[self.weight])?;
        tape.add_row(xw, bound[self.bias])
    }

    /// Tape-free evaluation for a single input vector.
    pub fn apply(&self, params: &ParamSet, x: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if x.len() != self.in_dim {
            return Err(NumericsError::ShapeMismatch {
                op: "linear",
                left: vec![self.in_dim],
                right: vec![x.len()],
            });
        }
        let w = params.get(self.weight);
        let b = params.get(self.bias);
        Ok((0..self.out_dim)
            .map(|o| b.data()[o] + super::tensor::dot(w.row(o), x))
            .collect())
    }
}

/// Hidden and cell vectors of an LSTM.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Single-layer LSTM cell, gate order (input, forget, cell, output).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub w_ih: usize,
    pub w_hh: usize,
    pub bias: usize,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        let w_ih = params.push(
            format!("{name}.w_ih"),
            init_uniform(rng, &[4 * hidden, in_dim], hidden, 1.0),
        );
        let w_hh = params.push(
            format!("{name}.w_hh"),
            init_uniform(rng, &[4 * hidden, hidden], hidden, 1.0),
        );
        // forget gate bias starts at 1
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let bias = params.push(format!("{name}.bias"), Tensor::vector(b));
        Self { w_ih, w_hh, bias, in_dim, hidden }
    }

    /// Batched step on the tape: `x: [B, in]`, `h, c: [B, hidden]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var), NumericsError> {
        let hd = self.hidden;
        let xi = tape.matmul_t(x, bound[self.w_ih])?;
        let hh = tape.matmul_t(h, bound[self.w_hh])?;
        let gates = tape.add(xi, hh)?;
        let gates = tape.add_row(gates, bound[self.bias])?;
        let i = tape.slice_cols(gates, 0, hd)?;
        let f = tape.slice_cols(gates, hd, 2 * hd)?;
        let g = tape.slice_cols(gates, 2 * hd, 3 * hd)?;
        let o = tape.slice_cols(gates, 3 * hd, 4 * hd)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Tape-free single step.
    pub fn step(
        &self,
        params: &ParamSet,
        input: &[f64],
        state: &LstmState,
    ) -> Result<LstmState, NumericsError> {
        let hd = self.hidden;
        if input.len() != self.in_dim {
            return Err(NumericsError::ShapeMismatch {
                op: "lstm_cell input",
                left: vec![self.in_dim],
                right: vec![input.len()],
            });
        }
        if state.h.len() != hd || state.c.len() != hd {
            return Err(NumericsError::ShapeMismatch {
                op: "lstm_cell hidden",
                left: vec![hd],
                right: vec![state.h.len(), state.c.len()],
            });
        }
        let w_ih = params.get(self.w_ih);
        let w_hh = params.get(self.w_hh);
        let b = params.get(self.bias).data();
        let gate = |row: usize| {
            b[row] + super::tensor::dot(w_ih.row(row), input) + super::tensor::dot(w_hh.row(row), &state.h)
        };
        let mut next = LstmState::zeros(hd);
        for j in 0..hd {
            let i = sigmoid(gate(j));
            let f = sigmoid(gate(hd + j));
            let g = gate(2 * hd + j).tanh();
            let o = sigmoid(gate(3 * hd + j));
            next.c[j] = f * state.c[j] + i * g;
            next.h[j] = o * next.c[j].tanh();
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(in_dim: usize, hidden: usize) -> (ParamSet, LstmCell) {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCell::new(&mut params, &mut rng, "lstm", in_dim, hidden);
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        (params, cell)
    }

    #[test]
    fn all_zero_cell_stays_at_zero() {
        let (params, cell) = zero_cell(3, 2);
        let next = cell.step(&params, &[0.0; 3], &LstmState::zeros(2)).unwrap();
        assert_eq!(next, LstmState::zeros(2));
    }

    #[test]
    fn hidden_output_is_bounded() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cell = LstmCell::new(&mut params, &mut rng, "lstm", 4, 5);
        for t in params.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0));
        }
        let mut state = LstmState::zeros(5);
        for step in 0..50 {
            let x: Vec<f64> = (0..4).map(|k| ((step * 4 + k) as f64).sin() * 3.0).collect();
            state = cell.step(&params, &x, &state).unwrap();
            assert!(state.h.iter().all(|v| v.abs() < 1.0));
            assert!(state.c.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn single_unit_matches_hand_gates() {
        // weights: w_ih = [0.5, -0.5, 1.0, 2.0], w_hh = 0, bias = [0, 0, 0, 0]
        // x = 1, h = 0, c = 0.5
        // i = σ(0.5) = 0.622459, f = σ(-0.5) = 0.377541, g = tanh(1) = 0.761594, o = σ(2) = 0.880797
        // c' = 0.377541 * 0.5 + 0.622459 * 0.761594 = 0.662831
        // h' = 0.880797 * tanh(0.662831) = 0.511078
        let (mut params, cell) = zero_cell(1, 1);
        params.tensors_mut()[cell.w_ih].data_mut().copy_from_slice(&[0.5, -0.5, 1.0, 2.0]);
        let next = cell
            .step(&params, &[1.0], &LstmState { h: vec![0.0], c: vec![0.5] })
            .unwrap();
        assert_abs_diff_eq!(next.c[0], 0.662831, epsilon = 1e-6);
        assert_abs_diff_eq!(next.h[0], 0.511078, epsilon = 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let (params, cell) = zero_cell(3, 2);
        assert!(cell.step(&params, &[0.0; 2], &LstmState::zeros(2)).is_err());
        assert!(cell.step(&params, &[0.0; 3], &LstmState::zeros(3)).is_err());
    }

    #[test]
    fn tape_step_matches_plain_step() {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::new(&mut params, &mut rng, "lstm", 3, 4);
        let x = [0.3, -1.2, 0.7];
        let prev = LstmState { h: vec![0.1, -0.2, 0.3, 0.0], c: vec![0.5, 0.0, -0.5, 1.0] };
        let plain = cell.step(&params, &x, &prev).unwrap();

        let mut tape = Tape::new();
        let bound = tape.bind(&params);
        let xv = tape.constant(Tensor::matrix(1, 3, x.to_vec()).unwrap());
        let hv = tape.constant(Tensor::matrix(1, 4, prev.h.clone()).unwrap());
        let cv = tape.constant(Tensor::matrix(1, 4, prev.c.clone()).unwrap());
        let (h, c) = cell.forward(&mut tape, &bound, xv, hv, cv).unwrap();
        for j in 0..4 {
            assert_abs_diff_eq!(tape.value(h).data()[j], plain.h[j], epsilon = 1e-14);
            assert_abs_diff_eq!(tape.value(c).data()[j], plain.c[j], epsilon = 1e-14);
        }
    }
}
