//! Clipped-surrogate PPO update with hand-derived gradients.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::policy::{gaussian_entropy, squashed_log_prob, PolicyNet, ValueNet, ACTION_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub learning_rate: f64,
    /// Steps per environment per update.
    pub rollout_horizon: usize,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub total_env_steps: u64,
    pub num_envs: usize,
    pub hidden_sizes: Vec<usize>,
    pub init_log_std: f64,
    /// Normalized observations are clipped to +-obs_clip.
    pub obs_clip: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            learning_rate: 3e-4,
            rollout_horizon: 256,
            epochs_per_update: 10,
            minibatch_size: 2048,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            total_env_steps: 25_000_000,
            num_envs: 100,
            hidden_sizes: vec![128, 128],
            init_log_std: -0.5,
            obs_clip: 10.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("gae_lambda", "must lie in [0, 1]"));
        }
        if !(self.clip_range > 0.0) {
            return Err(Error::config("clip_range", "must be > 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        for (key, v) in [
            ("rollout_horizon", self.rollout_horizon),
            ("epochs_per_update", self.epochs_per_update),
            ("minibatch_size", self.minibatch_size),
            ("num_envs", self.num_envs),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden_sizes", "need at least one non-empty hidden layer"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config("max_grad_norm", "must be > 0"));
        }
        if !(self.obs_clip > 0.0) {
            return Err(Error::config("obs_clip", "must be > 0"));
        }
        Ok(())
    }

    pub fn steps_per_update(&self) -> u64 {
        (self.rollout_horizon * self.num_envs) as u64
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One minibatch of training data.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub observations: Array2<f64>,
    pub raw_actions: Array2<f64>,
    pub old_log_probs: Array1<f64>,
    pub advantages: Array1<f64>,
    pub returns: Array1<f64>,
}

impl Minibatch {
    pub fn gather(buffer: &RolloutBuffer, indices: &[usize]) -> Self {
        let d = buffer.obs_dim();
        let b = indices.len();
        let mut observations = Array2::zeros((b, d));
        let mut raw_actions = Array2::zeros((b, ACTION_DIM));
        for (row, &i) in indices.iter().enumerate() {
            observations.row_mut(row).assign(&ndarray::ArrayView1::from(buffer.observation(i)));
            for k in 0..ACTION_DIM {
                raw_actions[(row, k)] = buffer.raw_actions[i][k];
            }
        }
        Self {
            observations,
            raw_actions,
            old_log_probs: indices.iter().map(|&i| buffer.log_probs[i]).collect(),
            advantages: indices.iter().map(|&i| buffer.advantages[i]).collect(),
            returns: indices.iter().map(|&i| buffer.returns[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// policy_loss - entropy_coef * entropy + value_coef * value_loss
    pub total: f64,
}

/// Loss on one minibatch and its gradient with respect to the flat policy
/// parameters and the flat value parameters.
pub fn minibatch_loss_and_grad(
    policy: &PolicyNet,
    value: &ValueNet,
    batch: &Minibatch,
    config: &PpoConfig,
) -> (LossTerms, Vec<f64>, Vec<f64>) {
    let b = batch.len();
    let inv_b = 1.0 / b as f64;
    let eps = config.clip_range;

    let pcache = policy.forward_cached(batch.observations.view());
    let mu = &pcache.output;
    let log_std = policy.log_std();
    let inv_var: [f64; ACTION_DIM] = std::array::from_fn(|k| (-2.0 * log_std[k]).exp());

    let mut d_mu = Array2::zeros((b, ACTION_DIM));
    let mut d_log_std = [0.0; ACTION_DIM];
    let mut policy_loss = 0.0;
    let mut approx_kl = 0.0;
    let mut clipped = 0usize;
    for i in 0..b {
        let raw: [f64; ACTION_DIM] = std::array::from_fn(|k| batch.raw_actions[(i, k)]);
        let mean: [f64; ACTION_DIM] = std::array::from_fn(|k| mu[(i, k)]);
        let log_prob = squashed_log_prob(&raw, &mean, &log_std);
        let log_ratio = log_prob - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let unclipped_obj = ratio * adv;
        let clipped_obj = clipped_ratio * adv;
        policy_loss -= unclipped_obj.min(clipped_obj) * inv_b;
        approx_kl += ((ratio - 1.0) - log_ratio) * inv_b;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        // The min selects the clipped branch only when it is strictly
        // smaller; there the objective is flat in the parameters.
        if clipped_obj < unclipped_obj {
            continue;
        }
        let g = -adv * ratio * inv_b;
        for k in 0..ACTION_DIM {
            let diff = raw[k] - mean[k];
            d_mu[(i, k)] = g * diff * inv_var[k];
            d_log_std[k] += g * (diff * diff * inv_var[k] - 1.0);
        }
    }
    let entropy = gaussian_entropy(&log_std);
    let active = policy.log_std_active();
    for k in 0..ACTION_DIM {
        d_log_std[k] -= config.entropy_coef;
        if !active[k] {
            d_log_std[k] = 0.0;
        }
    }

    let mut policy_grad = vec![0.0; policy.num_params()];
    policy.backward(&pcache, d_mu.view(), &mut policy_grad);
    let n = policy_grad.len();
    policy_grad[n - ACTION_DIM..].copy_from_slice(&d_log_std);

    let vcache = value.forward_cached(batch.observations.view());
    let mut d_v = Array2::zeros((b, 1));
    let mut value_loss = 0.0;
    for i in 0..b {
        let err = vcache.output[(i, 0)] - batch.returns[i];
        value_loss += err * err * inv_b;
        d_v[(i, 0)] = 2.0 * config.value_coef * err * inv_b;
    }
    let mut value_grad = vec![0.0; value.num_params()];
    value.backward(&vcache, d_v.view(), &mut value_grad);

    let terms = LossTerms {
        policy_loss,
        value_loss,
        entropy,
        approx_kl,
        clip_fraction: clipped as f64 * inv_b,
        total: policy_loss - config.entropy_coef * entropy + config.value_coef * value_loss,
    };
    (terms, policy_grad, value_grad)
}

/// Optimizer state for both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoOptimizer {
    pub policy: Adam,
    pub value: Adam,
}

impl PpoOptimizer {
    pub fn new(policy: &PolicyNet, value: &ValueNet) -> Self {
        Self {
            policy: Adam::new(policy.num_params()),
            value: Adam::new(value.num_params()),
        }
    }
}

/// Mean diagnostics over every minibatch of an update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Runs `epochs_per_update` passes of shuffled minibatch Adam steps over the
/// buffer. Advantages must already be computed.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    optimizer: &mut PpoOptimizer,
    buffer: &RolloutBuffer,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;
    for _ in 0..config.epochs_per_update {
        indices.shuffle(rng);
        for chunk in indices.chunks(config.minibatch_size) {
            let batch = Minibatch::gather(buffer, chunk);
            let (terms, mut pg, mut vg) = minibatch_loss_and_grad(policy, value, &batch, config);
            if !terms.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    policy_loss: terms.policy_loss,
                    value_loss: terms.value_loss,
                });
            }
            clip_global_norm(&mut [&mut pg, &mut vg], config.max_grad_norm);

            let mut pp = policy.flat_params();
            optimizer.policy.step(&mut pp, &pg, config.learning_rate);
            policy.set_flat_params(&pp);
            let mut vp = value.flat_params().to_vec();
            optimizer.value.step(&mut vp, &vg, config.learning_rate);
            value.set_flat_params(&vp);

            stats.policy_loss += terms.policy_loss;
            stats.value_loss += terms.value_loss;
            stats.entropy += terms.entropy;
            stats.approx_kl += terms.approx_kl;
            stats.clip_fraction += terms.clip_fraction;
            batches += 1;
        }
    }
    let k = batches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    Ok(stats)
}

/// Scales all gradients jointly so their combined L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [&mut Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}
