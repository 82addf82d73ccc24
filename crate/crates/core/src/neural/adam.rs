//! Adam optimizer over flat parameter storage.

use serde::{Deserialize, Serialize};

use super::params::NetworkParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn apply(&mut self, params: &mut NetworkParams, grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let data = params.data_mut();
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::params::{Init, ParamBuilder};
    use crate::seeding::rng_from_seed;

    fn two_params() -> NetworkParams {
        let mut rng = rng_from_seed(0);
        let mut b = ParamBuilder::new(&mut rng);
        b.register("w", &[2], Init::Zero);
        b.finish()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = two_params();
        let mut adam = AdamState::new(2, 1e-3);
        adam.apply(&mut p, &[0.0, 0.0]);
        assert_eq!(p.data(), &[0.0, 0.0]);
    }

    #[test]
    fn unit_gradient_first_step_moves_by_lr() {
        let mut p = two_params();
        let mut adam = AdamState::new(2, 1e-3);
        adam.apply(&mut p, &[1.0, 1.0]);
        // Bias correction makes m_hat = v_hat = 1 on step one.
        for v in p.data() {
            assert!((v + 1e-3).abs() < 1e-9, "got {v}");
        }
    }

    #[test]
    fn identical_states_give_identical_results() {
        let mut p1 = two_params();
        let mut p2 = two_params();
        let mut a1 = AdamState::new(2, 1e-4);
        let mut a2 = AdamState::new(2, 1e-4);
        for k in 0..10 {
            let g = [0.3 * k as f64, -0.7];
            a1.apply(&mut p1, &g);
            a2.apply(&mut p2, &g);
        }
        assert_eq!(p1.data(), p2.data());
    }
}
