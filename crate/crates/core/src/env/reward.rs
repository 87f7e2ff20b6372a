//! Per-step reward terms.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::EnvConfig;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub progress: f64,
    pub safety: f64,
    pub terminal: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(progress: f64, safety: f64, terminal: f64) -> Self {
        Self {
            progress,
            safety,
            terminal,
            total: progress + safety + terminal,
        }
    }
}

/// Reduction of the distance to `target` over the step, minus a body-rate
/// penalty.
pub fn progress_reward(
    target: &Vector3<f64>,
    p_prev: &Vector3<f64>,
    p: &Vector3<f64>,
    body_rate: &Vector3<f64>,
    config: &EnvConfig,
) -> f64 {
    config.lambda1 * ((target - p_prev).norm() - (target - p).norm()) - config.lambda2 * body_rate.norm()
}

/// Exponential proximity penalty over the observed obstacle distances.
pub fn safety_reward(distances: &[f64], config: &EnvConfig) -> f64 {
    config.lambda3 * distances.iter().map(|d| (-d.abs()).exp()).sum::<f64>()
}
