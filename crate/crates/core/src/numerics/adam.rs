use alloc::vec;
use alloc::vec::Vec;

use super::ParamSet;
use crate::error::{config_err, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-8;

    /// Zeroed moments shaped like `params`, default betas and epsilon.
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.numel()]).collect::<Vec<_>>();
        Self {
            lr,
            beta1: Self::DEFAULT_BETA1,
            beta2: Self::DEFAULT_BETA2,
            epsilon: Self::DEFAULT_EPSILON,
            step_count: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    /// Applies one update from the gradients currently stored in `params`.
    /// Gradients are left untouched.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if self.first_moment.len() != params.len() || self.second_moment.len() != params.len() {
            return Err(config_err!(
                "optimizer tracks {} tensors, model has {}",
                self.first_moment.len(),
                params.len()
            ));
        }
        for ((p, m), v) in params.iter().zip(&self.first_moment).zip(&self.second_moment) {
            if m.len() != p.numel() || v.len() != p.numel() {
                return Err(config_err!("optimizer moment shape mismatch for {}", p.name));
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - libm::pow(self.beta1, t);
        let bc2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.epsilon);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            for (((theta, &g), m), v) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        let id = ps.push("w", vec![1], vec![value]).unwrap();
        ps.get_mut(id).grad[0] = grad;
        ps
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut ps = single(1.25, 0.0);
        let mut adam = AdamState::new(&ps, 5e-4);
        adam.step(&mut ps).unwrap();
        assert_eq!(ps.iter().next().unwrap().value, vec![1.25]);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = single(0.0, 1.0);
        let mut adam = AdamState::new(&ps, 5e-4);
        adam.step(&mut ps).unwrap();
        // m_hat = 1, v_hat = 1 => delta = -lr / (1 + eps)
        let expected = -5e-4 / (1.0 + 1e-8);
        assert!((ps.iter().next().unwrap().value[0] - expected).abs() < 1e-15);
        assert_eq!(ps.iter().next().unwrap().grad, vec![1.0]);
    }

    #[test]
    fn identical_state_gives_identical_update() {
        let mut a = single(0.3, -0.7);
        let mut b = a.clone();
        let mut sa = AdamState::new(&a, 5e-4);
        let mut sb = sa.clone();
        for _ in 0..5 {
            sa.step(&mut a).unwrap();
            sb.step(&mut b).unwrap();
        }
        assert_eq!(a.iter().next().unwrap().value[0].to_bits(), b.iter().next().unwrap().value[0].to_bits());
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut ps = single(0.0, 1.0);
        let mut adam = AdamState::new(&ParamSet::new(), 5e-4);
        assert!(adam.step(&mut ps).is_err());
    }
}
