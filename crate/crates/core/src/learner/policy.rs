//! Stochastic policy (tanh-squashed diagonal Gaussian) and value network.

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{ForwardCache, Mlp};
use crate::env::Action;

pub const ACTION_DIM: usize = 4;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    trunk: Mlp,
    log_std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAction {
    pub action: Action,
    /// Pre-squash Gaussian sample; `action = tanh(raw)`.
    pub raw: [f64; ACTION_DIM],
    pub log_prob: f64,
}

impl PolicyNet {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], init_log_std: f64, rng: &mut R) -> Self {
        Self {
            trunk: Mlp::orthogonal(&layer_sizes(input_dim, hidden, ACTION_DIM), 0.01, rng),
            log_std: vec![init_log_std; ACTION_DIM],
        }
    }

    pub fn from_parts(trunk: Mlp, log_std: Vec<f64>) -> Self {
        assert_eq!(trunk.output_dim(), ACTION_DIM);
        assert_eq!(log_std.len(), ACTION_DIM);
        Self { trunk, log_std }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + ACTION_DIM
    }

    /// Trunk parameters followed by the raw log-std parameters.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.trunk.params().to_vec();
        v.extend_from_slice(&self.log_std);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let n = self.trunk.num_params();
        self.trunk.params_mut().copy_from_slice(&flat[..n]);
        self.log_std.copy_from_slice(&flat[n..n + ACTION_DIM]);
    }

    /// Effective log standard deviations, clamped to the allowed range.
    pub fn log_std(&self) -> [f64; ACTION_DIM] {
        std::array::from_fn(|k| self.log_std[k].clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    /// True where the raw parameter sits inside the clamp range, so the
    /// gradient passes through.
    pub(crate) fn log_std_active(&self) -> [bool; ACTION_DIM] {
        std::array::from_fn(|k| (LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std[k]))
    }

    pub(crate) fn forward_cached(&self, obs: ArrayView2<'_, f64>) -> ForwardCache {
        self.trunk.forward(obs)
    }

    pub(crate) fn backward(&self, cache: &ForwardCache, d_mean: ArrayView2<'_, f64>, grad: &mut [f64]) {
        let n = self.trunk.num_params();
        self.trunk.backward(cache, d_mean, &mut grad[..n]);
    }

    /// Pre-squash Gaussian means for a batch, plus the shared log-stds.
    pub fn forward_raw(&self, obs: ArrayView2<'_, f64>) -> (Array2<f64>, [f64; ACTION_DIM]) {
        (self.trunk.forward(obs).output, self.log_std())
    }

    /// Deterministic action means (squashed into [-1, 1]) and log-stds for
    /// a single observation.
    pub fn forward(&self, obs: &[f64]) -> ([f64; ACTION_DIM], [f64; ACTION_DIM]) {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        let (mu, log_std) = self.forward_raw(x);
        (std::array::from_fn(|k| mu[(0, k)].tanh()), log_std)
    }

    /// Draws one action per row of `obs`. In deterministic mode the action is
    /// the squashed mean.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        obs: ArrayView2<'_, f64>,
        deterministic: bool,
        rng: &mut R,
    ) -> Vec<SampledAction> {
        let (mu, log_std) = self.forward_raw(obs);
        (0..mu.nrows())
            .map(|i| {
                let mean: [f64; ACTION_DIM] = std::array::from_fn(|k| mu[(i, k)]);
                let raw: [f64; ACTION_DIM] = if deterministic {
                    mean
                } else {
                    std::array::from_fn(|k| {
                        let eps: f64 = rng.sample(StandardNormal);
                        mean[k] + log_std[k].exp() * eps
                    })
                };
                SampledAction {
                    action: Action(raw.map(|u| u.tanh().clamp(-1.0, 1.0))),
                    raw,
                    log_prob: squashed_log_prob(&raw, &mean, &log_std),
                }
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> SampledAction {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row view");
        self.sample_batch(x, deterministic, rng)[0]
    }
}

/// log(1 - tanh(u)^2), stable for large |u|.
pub fn log_squash_jacobian(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Diagonal Gaussian log-density of the pre-squash sample.
pub fn gaussian_log_prob(raw: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    raw.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((u, m), ls)| {
            let z = (u - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Log-density of `tanh(raw)` under the squashed Gaussian.
pub fn squashed_log_prob(raw: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    gaussian_log_prob(raw, mean, log_std) - raw.iter().map(|u| log_squash_jacobian(*u)).sum::<f64>()
}

/// Entropy of the pre-squash Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    net: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        Self {
            net: Mlp::orthogonal(&layer_sizes(input_dim, hidden, 1), 1.0, rng),
        }
    }

    pub fn from_mlp(net: Mlp) -> Self {
        assert_eq!(net.output_dim(), 1);
        Self { net }
    }

    pub fn mlp(&self) -> &Mlp {
        &self.net
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn flat_params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        self.net.params_mut().copy_from_slice(flat);
    }

    pub fn predict(&self, obs: ArrayView2<'_, f64>) -> Array1<f64> {
        self.net.forward(obs).output.column(0).to_owned()
    }

    pub(crate) fn forward_cached(&self, obs: ArrayView2<'_, f64>) -> ForwardCache {
        self.net.forward(obs)
    }

    pub(crate) fn backward(&self, cache: &ForwardCache, d_value: ArrayView2<'_, f64>, grad: &mut [f64]) {
        self.net.backward(cache, d_value, grad);
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_has_zero_mean() {
        let p = PolicyNet::from_parts(Mlp::zeros(&[6, 8, 8, 4]), vec![0.0; 4]);
        let (mean, _) = p.forward(&[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        assert_eq!(mean, [0.0; 4]);
    }

    #[test]
    fn means_bounded_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyNet::new(10, &[16, 16], 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        let q = PolicyNet::new(10, &[16, 16], 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(p, q);
        for _ in 0..10_000 {
            let obs: Vec<f64> = (0..10).map(|_| rng.random_range(-50.0..50.0)).collect();
            let (mean, _) = p.forward(&obs);
            assert!(mean.iter().all(|m| (-1.0..=1.0).contains(m)));
        }
    }

    #[test]
    fn deterministic_sample_is_squashed_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolicyNet::new(5, &[8, 8], 0.0, &mut rng);
        let obs = [0.3, -0.2, 1.0, 2.0, -1.0];
        let (mean, _) = p.forward(&obs);
        let s = p.sample(&obs, true, &mut rng);
        assert_eq!(s.action.0, mean);
    }

    #[test]
    fn minimum_std_concentrates_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = PolicyNet::new(3, &[8, 8], 0.0, &mut rng);
        let mut flat = p.flat_params();
        let n = flat.len();
        flat[n - 4..].fill(LOG_STD_MIN);
        p.set_flat_params(&flat);
        let obs = [0.5, 0.1, -0.7];
        let (mean, _) = p.forward(&obs);
        let draws = 10_000;
        let close = (0..draws)
            .filter(|_| {
                let s = p.sample(&obs, false, &mut rng);
                s.action.0.iter().zip(mean).all(|(a, m)| (a - m).abs() < 0.05)
            })
            .count();
        assert!(close as f64 >= 0.99 * draws as f64);
    }

    #[test]
    fn jacobian_term_is_stable() {
        for u in [-40.0, -3.0, 0.0, 0.7, 25.0, 40.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = log_squash_jacobian(u);
            assert!(stable.is_finite());
            if direct.is_finite() {
                assert!((direct - stable).abs() < 1e-9, "u={u}");
            }
        }
    }
}
