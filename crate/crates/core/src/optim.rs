//! Adam over a flat parameter vector.

use crate::error::{PrismError, Result};
use serde::{Deserialize, Serialize};

/// First/second moment buffers plus hyperparameters for Adam. The buffers
/// track one flat parameter vector; callers that keep parameters in named
/// blocks flatten them in a fixed order before each step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    /// State for `param_len` parameters with the given learning rate and
    /// the usual beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8 defaults.
    pub fn new(param_len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: vec![0.0; param_len],
            second_moment: vec![0.0; param_len],
        }
    }

    /// One bias-corrected Adam update applied in place. Increments
    /// `step_count`. Errors if shapes disagree or a gradient entry is not
    /// finite (the message carries the flat index so callers can name the
    /// offending parameter block).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(PrismError::Shape(format!(
                "adam: {} params, {} grads, state tracks {}",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(PrismError::Numeric(format!(
                "non-finite gradient {} at flat index {i}",
                grads[i]
            )));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for i in 0..params.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] =
                self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bc1;
            let v_hat = self.second_moment[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
