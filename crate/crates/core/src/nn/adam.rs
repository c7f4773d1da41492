//! Adam over flat parameter vectors.

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} parameters and gradients", self.m.len()),
                found: format!("{} and {}", params.len(), grads.len()),
            });
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            adam.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_normalised() {
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(3, cfg);
        let g = [0.3, -4.0, 1e-3];
        let mut p = vec![0.0; 3];
        adam.step(&mut p, &g).unwrap();
        for (dp, gi) in p.iter().zip(g) {
            let expected = -cfg.lr * gi / (gi.abs() + cfg.eps);
            assert!((dp - expected).abs() < 1e-12, "{dp} vs {expected}");
        }
    }

    #[test]
    fn constant_gradient_steps_stay_bounded_by_lr() {
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(1, cfg);
        let mut p = vec![0.0];
        let mut step = 0.0;
        for _ in 0..500 {
            let prev = p[0];
            adam.step(&mut p, &[2.5]).unwrap();
            step = (p[0] - prev).abs();
            assert!(step <= cfg.lr * (1.0 + 1e-9));
        }
        assert!((step - cfg.lr).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = Adam::new(2, AdamConfig::default());
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
