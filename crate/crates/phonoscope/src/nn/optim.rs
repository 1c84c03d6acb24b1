//! Adam with bias correction.

use super::tensor::Tensor;
use super::{NnError, Result};

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

/// Optimizer state: first/second moments per parameter tensor, allocated on
/// the first step in visitation order, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, moments: Vec::new(), t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update over `(param, grad)` pairs. The pairs must arrive
    /// in the same order every step; state is keyed by position.
    pub fn step(&mut self, pairs: &mut [(&mut Tensor, &Tensor)]) -> Result<()> {
        if self.moments.is_empty() {
            for (p, _) in pairs.iter() {
                self.moments.push((vec![0.0; p.len()], vec![0.0; p.len()]));
            }
        }
        if self.moments.len() != pairs.len() {
            return Err(NnError::Numeric(format!(
                "optimizer saw {} parameter tensors, expected {}",
                pairs.len(),
                self.moments.len()
            )));
        }
        self.t += 1;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (idx, (param, grad)) in pairs.iter_mut().enumerate() {
            if !grad.all_finite() {
                return Err(NnError::Numeric(format!("non-finite gradient in tensor {idx}")));
            }
            let (m, v) = &mut self.moments[idx];
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad.data()[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.config.lr * m_hat / (v_hat.sqrt() + self.config.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_in_gradient_sign() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg);
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]);
        let g = Tensor::from_vec(&[3], vec![0.4, -0.1, 2.0]);
        let before = p.data().to_vec();
        adam.step(&mut [(&mut p, &g)]).unwrap();
        for i in 0..3 {
            let delta = p.data()[i] - before[i];
            // |m_hat / sqrt(v_hat)| = 1 at t = 1 for any nonzero g
            assert!((delta.abs() - 0.01).abs() < 1e-6, "delta {delta}");
            assert_eq!(delta.signum(), -g.data()[i].signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::from_vec(&[2], vec![3.0, -4.0]);
        let g = Tensor::zeros(&[2]);
        adam.step(&mut [(&mut p, &g)]).unwrap();
        assert_eq!(p.data(), &[3.0, -4.0]);
    }

    #[test]
    fn constant_gradient_steps_bounded_by_lr() {
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut adam = Adam::new(cfg);
        let mut p = Tensor::from_vec(&[1], vec![0.0]);
        let g = Tensor::from_vec(&[1], vec![0.7]);
        let mut prev = 0.0;
        for _ in 0..2 {
            adam.step(&mut [(&mut p, &g)]).unwrap();
            let delta: f64 = p.data()[0] - prev;
            assert!(delta.abs() <= 0.05 * (1.0 + 1e-6), "step {delta}");
            prev = p.data()[0];
        }
    }

    #[test]
    fn non_finite_gradient_is_a_numeric_error() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::zeros(&[1]);
        let g = Tensor::from_vec(&[1], vec![f64::NAN]);
        assert!(matches!(adam.step(&mut [(&mut p, &g)]), Err(NnError::Numeric(_))));
    }
}
