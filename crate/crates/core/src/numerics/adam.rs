use super::{Gradients, NumericsError, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators for Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self { config, step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moment accumulators, one tensor per parameter slot.
    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Rebuilds a saved state; shapes are checked on the next step.
    pub fn from_parts(config: AdamConfig, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Self {
        Self { config, step, first, second }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<(), NumericsError> {
        if grads.slots().len() != params.len() || self.first.len() != params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam_step",
                left: vec![params.len()],
                right: vec![grads.slots().len()],
            });
        }
        for (slot, (p, g)) in params.tensors().iter().zip(grads.slots()).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[slot].shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (slot, p) in params.tensors_mut().iter_mut().enumerate() {
            let g = grads.get(slot).data();
            let m = self.first[slot].data_mut();
            let v = self.second[slot].data_mut();
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
