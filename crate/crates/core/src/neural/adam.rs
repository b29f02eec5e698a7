use serde::{Deserialize, Serialize};

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState { config, m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], step: 0 }
    }

    /// Bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "adam: parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "adam: gradient count mismatch");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let correction1 = T::of(1.0 - c.beta1.powi(t));
        let correction2 = T::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let one = T::one();
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Rescales `grads` to at most `max_norm` in L2; returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut [T], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::<f64>::new(1, AdamConfig::default());
        let mut p = [0.0];
        s.step(&mut p, &[1.0]);
        assert_relative_eq!(p[0], -1e-3 / (1.0 + 1e-8), epsilon = 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = AdamState::<f64>::new(3, AdamConfig::default());
        let mut p = [0.5, -1.0, 2.0];
        s.step(&mut p, &[0.0; 3]);
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn second_step_moments_follow_recursion() {
        let mut s = AdamState::<f64>::new(1, AdamConfig::default());
        let mut p = [0.0];
        s.step(&mut p, &[0.5]);
        s.step(&mut p, &[0.5]);
        let m1 = 0.1 * 0.5;
        let v1 = 0.001 * 0.25;
        let m2 = 0.9 * m1 + 0.1 * 0.5;
        let v2 = 0.999 * v1 + 0.001 * 0.25;
        assert_relative_eq!(s.m[0], m2, epsilon = 1e-15);
        assert_relative_eq!(s.v[0], v2, epsilon = 1e-15);
        let step2 = 1e-3 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert_relative_eq!(p[0], -1e-3 / (1.0 + 2e-8) - step2, epsilon = 1e-12);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = [3.0f64, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert_relative_eq!(g[0], 0.6, epsilon = 1e-15);
        let mut small = [0.3f64, 0.4];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, [0.3, 0.4]);
    }
}
