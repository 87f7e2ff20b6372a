use serde::{Deserialize, Serialize};

use super::policy::ACTION_DIM;

/// Transitions from `num_envs` environments over `horizon` steps, stored
/// step-major: index `t * num_envs + e`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutBuffer {
    horizon: usize,
    num_envs: usize,
    obs_dim: usize,
    len: usize,
    /// Normalized observations as seen by the policy.
    pub observations: Vec<f64>,
    pub raw_actions: Vec<[f64; ACTION_DIM]>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// The episode ended at this step; no bootstrap across it.
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Value of the observation following the final step, per environment.
    pub last_values: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(horizon: usize, num_envs: usize, obs_dim: usize) -> Self {
        let n = horizon * num_envs;
        Self {
            horizon,
            num_envs,
            obs_dim,
            len: 0,
            observations: Vec::with_capacity(n * obs_dim),
            raw_actions: Vec::with_capacity(n),
            log_probs: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            advantages: vec![0.0; n],
            returns: vec![0.0; n],
            last_values: vec![0.0; num_envs],
        }
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.observations.clear();
        self.raw_actions.clear();
        self.log_probs.clear();
        self.rewards.clear();
        self.values.clear();
        self.dones.clear();
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.horizon * self.num_envs
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, obs: &[f64], raw_action: [f64; ACTION_DIM], log_prob: f64, reward: f64, value: f64, done: bool) {
        assert!(!self.is_full(), "rollout buffer full");
        assert_eq!(obs.len(), self.obs_dim);
        self.observations.extend_from_slice(obs);
        self.raw_actions.push(raw_action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
        self.len += 1;
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Fills advantages and returns, per environment, then normalizes the
    /// advantages over the whole batch.
    pub fn compute_gae(&mut self, gamma: f64, gae_lambda: f64) {
        assert!(self.is_full(), "compute_gae on a partial rollout");
        let (h, n) = (self.horizon, self.num_envs);
        let mut r = vec![0.0; h];
        let mut v = vec![0.0; h];
        let mut d = vec![false; h];
        for e in 0..n {
            for t in 0..h {
                r[t] = self.rewards[t * n + e];
                v[t] = self.values[t * n + e];
                d[t] = self.dones[t * n + e];
            }
            let (adv, ret) = gae(&r, &v, &d, self.last_values[e], gamma, gae_lambda);
            for t in 0..h {
                self.advantages[t * n + e] = adv[t];
                self.returns[t * n + e] = ret[t];
            }
        }
        normalize_advantages(&mut self.advantages);
    }
}

/// Reverse-scan generalized advantage estimation over one environment's
/// trajectory. Returns `(advantages, returns)` with `returns = adv + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let h = rewards.len();
    assert!(values.len() == h && dones.len() == h);
    let mut adv = vec![0.0; h];
    let mut running = 0.0;
    for t in (0..h).rev() {
        let next_value = if t + 1 == h { last_value } else { values[t + 1] };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * gae_lambda * live * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to zero mean, unit (population) variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-12);
    }
}
