//! PPO pieces that do not touch networks: advantages, the clipped
//! surrogate and diagonal-Gaussian log densities.

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Initial policy and critic learning rate.
    pub lr: f64,
    /// Target KL for the adaptive learning rate; 0 keeps `lr` fixed.
    pub desired_kl: f64,
    pub max_grad_norm: f64,
    pub init_log_std: f64,
    /// Steps per environment per iteration.
    pub horizon: usize,
    /// Policy outputs are multiplied by this before becoming joint offsets, rad.
    pub action_scale: f64,
    /// Per-step rewards are multiplied by this for learning; metrics stay unscaled.
    pub reward_scale: f64,
    pub estimator_lr: f64,
    /// Adam steps on the estimator per iteration, each on an equal slice of the batch.
    pub estimator_steps: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            epochs: 5,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            lr: 1e-3,
            desired_kl: 0.01,
            max_grad_norm: 1.0,
            init_log_std: -0.5,
            horizon: 24,
            action_scale: 0.5,
            reward_scale: 0.02,
            estimator_lr: 1e-3,
            estimator_steps: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |key: &str, why: &str| Err(TrainError::InvalidConfig { key: format!("ppo.{key}"), reason: why.into() });
        if !(self.clip > 0.0) {
            return bad("clip", "must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.horizon == 0 || self.estimator_steps == 0 {
            return bad("epochs", "epochs, minibatches, horizon and estimator_steps must be at least 1");
        }
        for (key, v) in [("lr", self.lr), ("estimator_lr", self.estimator_lr), ("max_grad_norm", self.max_grad_norm)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, "must be positive");
            }
        }
        if !(self.desired_kl >= 0.0 && self.desired_kl.is_finite()) {
            return bad("desired_kl", "must be non-negative");
        }
        Ok(())
    }
}

pub const MIN_LR: f64 = 1e-5;
pub const MAX_LR: f64 = 1e-2;

/// Shrinks the learning rate when the measured KL overshoots twice the
/// target and grows it when KL falls under half the target.
pub fn adapt_lr(lr: f64, kl: f64, desired_kl: f64) -> f64 {
    if desired_kl <= 0.0 {
        lr
    } else if kl > 2.0 * desired_kl {
        (lr / 1.5).max(MIN_LR)
    } else if kl < 0.5 * desired_kl && kl > 0.0 {
        (lr * 1.5).min(MAX_LR)
    } else {
        lr
    }
}

/// Generalized advantage estimates and returns for one environment's
/// time-ordered steps. `dones[t]` marks the last step of an episode; no
/// value flows back across it.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(rewards.len() == values.len() && values.len() == dones.len(), "gae: misaligned inputs");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Shifts and scales to zero mean and unit standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for a in adv {
        *a = (*a - mean) * scale;
    }
}

/// Per-sample clipped objective `min(r·A, clip(r)·A)` and its derivative in `r`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn gaussian_log_prob(action: &[f32], mean: &[f32], log_std: &[f32]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&a, &m), &ls)| {
            let (a, m, ls) = (f64::from(a), f64::from(m), f64::from(ls));
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f32]) -> f64 {
    log_std.iter().map(|&ls| f64::from(ls) + 0.5 * (1.0 + LN_2PI)).sum()
}
