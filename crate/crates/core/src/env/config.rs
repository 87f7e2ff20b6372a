use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::FAR_DISTANCE;

/// Mapping from the normalized action cube to physical commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRanges {
    /// Collective thrust range [min, max], N.
    pub thrust: [f64; 2],
    /// Per-axis body-rate magnitude limit, rad/s.
    pub body_rate_max: f64,
}

impl Default for ActionRanges {
    fn default() -> Self {
        // 5 % to 100 % of the default vehicle's total rotor thrust (4 x 7 N).
        Self {
            thrust: [1.4, 28.0],
            body_rate_max: 8.0,
        }
    }
}

/// MDP settings: timing, reward weights and observation layout.
///
/// The four reward weights and the collision penalty have no serde default:
/// a config file must state them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Progress weight.
    pub lambda1: f64,
    /// Body-rate penalty weight (>= 0).
    pub lambda2: f64,
    /// Obstacle proximity weight (<= 0).
    pub lambda3: f64,
    /// Completion-time weight (<= 0).
    pub lambda4: f64,
    /// Collision penalty (< 0).
    pub r_collision: f64,
    #[serde(default = "defaults::n_obstacles")]
    pub n_obstacles: usize,
    #[serde(default = "defaults::lookahead_j")]
    pub lookahead_j: usize,
    #[serde(default = "defaults::control_dt")]
    pub control_dt: f64,
    #[serde(default = "defaults::sim_substeps")]
    pub sim_substeps: usize,
    #[serde(default = "defaults::max_episode_time")]
    pub max_episode_time: f64,
    #[serde(default)]
    pub action_ranges: ActionRanges,
    /// Distance reported for absent obstacles, m.
    #[serde(default = "defaults::far_distance")]
    pub far_distance: f64,
}

mod defaults {
    pub fn n_obstacles() -> usize {
        5
    }
    pub fn lookahead_j() -> usize {
        2
    }
    pub fn control_dt() -> f64 {
        0.02
    }
    pub fn sim_substeps() -> usize {
        5
    }
    pub fn max_episode_time() -> f64 {
        30.0
    }
    pub fn far_distance() -> f64 {
        super::FAR_DISTANCE
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.01,
            lambda3: -0.05,
            lambda4: -1.0,
            r_collision: -30.0,
            n_obstacles: defaults::n_obstacles(),
            lookahead_j: defaults::lookahead_j(),
            control_dt: defaults::control_dt(),
            sim_substeps: defaults::sim_substeps(),
            max_episode_time: defaults::max_episode_time(),
            action_ranges: ActionRanges::default(),
            far_distance: defaults::far_distance(),
        }
    }
}

impl EnvConfig {
    pub fn observation_dim(&self) -> usize {
        18 + 3 * self.lookahead_j + self.n_obstacles
    }

    pub fn substep_dt(&self) -> f64 {
        self.control_dt / self.sim_substeps as f64
    }

    /// Number of control steps after which an episode times out.
    pub fn max_steps(&self) -> u64 {
        (self.max_episode_time / self.control_dt - 1e-9).ceil() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("r_collision", self.r_collision),
        ];
        for (key, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if self.lambda2 < 0.0 {
            return Err(Error::config("lambda2", "must be >= 0"));
        }
        if self.lambda3 > 0.0 {
            return Err(Error::config("lambda3", "must be <= 0"));
        }
        if self.lambda4 > 0.0 {
            return Err(Error::config("lambda4", "must be <= 0"));
        }
        if !(self.r_collision < 0.0) {
            return Err(Error::config("r_collision", "must be < 0"));
        }
        if self.n_obstacles == 0 {
            return Err(Error::config("n_obstacles", "must be >= 1"));
        }
        if self.lookahead_j == 0 {
            return Err(Error::config("lookahead_j", "must be >= 1"));
        }
        if !(self.control_dt > 0.0) {
            return Err(Error::config("control_dt", "must be > 0"));
        }
        if self.sim_substeps == 0 {
            return Err(Error::config("sim_substeps", "must be >= 1"));
        }
        if !(self.max_episode_time > 0.0) {
            return Err(Error::config("max_episode_time", "must be > 0"));
        }
        let [lo, hi] = self.action_ranges.thrust;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config("action_ranges", "thrust range must satisfy min <= max"));
        }
        if !(self.action_ranges.body_rate_max >= 0.0) {
            return Err(Error::config("action_ranges", "body_rate_max must be >= 0"));
        }
        Ok(())
    }
}
