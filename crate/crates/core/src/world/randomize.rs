use nalgebra::{Quaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{WorldSpec, generate::ForestLevel};
use crate::dynamics::{QuadrotorParams, QuadrotorState};
use crate::error::{Error, Result};

/// Bounds of the per-reset perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationSpec {
    /// Per-axis bound on the start-position offset, m.
    pub position_delta: f64,
    /// Per-axis bound on the initial velocity, m/s.
    pub velocity_delta: f64,
    /// Per-component bound on the attitude perturbation quaternion.
    pub orientation_delta: f64,
    /// Relative bound on drag and thrust-mapping coefficients.
    pub param_jitter: f64,
    /// Per-axis bound on the offset of the designated random waypoint, m.
    pub waypoint_jitter: f64,
    /// Forest levels sampled on reset when training on generated forests.
    pub forest_levels: Vec<ForestLevel>,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self {
            position_delta: 1.0,
            velocity_delta: 1.0,
            orientation_delta: 1.0,
            param_jitter: 0.1,
            waypoint_jitter: 1.0,
            forest_levels: vec![ForestLevel::One, ForestLevel::Two, ForestLevel::Three],
        }
    }
}

impl RandomizationSpec {
    pub fn none() -> Self {
        Self {
            position_delta: 0.0,
            velocity_delta: 0.0,
            orientation_delta: 0.0,
            param_jitter: 0.0,
            waypoint_jitter: 0.0,
            forest_levels: vec![ForestLevel::One],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("position_delta", self.position_delta),
            ("velocity_delta", self.velocity_delta),
            ("orientation_delta", self.orientation_delta),
            ("param_jitter", self.param_jitter),
            ("waypoint_jitter", self.waypoint_jitter),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.param_jitter >= 1.0 {
            return Err(Error::config("param_jitter", "must be < 1"));
        }
        Ok(())
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    bound * rng.random_range(-1.0..=1.0)
}

/// Perturbs position, velocity and attitude of `base`; zeroes the body rate
/// and sets every rotor to hover thrust.
pub fn randomize_initial_state<R: Rng + ?Sized>(
    base: &QuadrotorState,
    spec: &RandomizationSpec,
    params: &QuadrotorParams,
    rng: &mut R,
) -> QuadrotorState {
    let offset = Vector3::from_fn(|_, _| symmetric(rng, spec.position_delta));
    let velocity = Vector3::from_fn(|_, _| symmetric(rng, spec.velocity_delta));

    let attitude = if spec.orientation_delta > 0.0 {
        let d = spec.orientation_delta;
        let perturb = Quaternion::new(
            1.0 + symmetric(rng, d),
            symmetric(rng, d),
            symmetric(rng, d),
            symmetric(rng, d),
        );
        let norm = perturb.norm();
        let perturb = if norm > 1e-9 {
            perturb / norm
        } else {
            Quaternion::identity()
        };
        let q = base.attitude * perturb;
        q / q.norm()
    } else {
        base.attitude
    };

    QuadrotorState {
        position: base.position + offset,
        velocity: base.velocity + velocity,
        attitude,
        body_rate: Vector3::zeros(),
        rotor_thrusts: [params.hover_thrust(); 4],
    }
}

/// Scales drag, torque constant and thrust gain by independent factors in
/// `[1 - jitter, 1 + jitter]`.
pub fn randomize_params<R: Rng + ?Sized>(
    calibrated: &QuadrotorParams,
    spec: &RandomizationSpec,
    rng: &mut R,
) -> QuadrotorParams {
    let j = spec.param_jitter;
    debug_assert!((0.0..1.0).contains(&j));
    let mut factor = || 1.0 + symmetric(rng, j);
    let mut out = calibrated.clone();
    for d in out.drag.iter_mut() {
        *d *= factor();
    }
    out.torque_const *= factor();
    out.thrust_gain *= factor();
    out
}

/// Returns a copy of `world` with its designated waypoint moved by up to
/// `waypoint_jitter` per axis. Candidate positions that would violate the
/// world invariants are redrawn; the nominal layout is kept if none fits.
pub fn jitter_designated_waypoint<R: Rng + ?Sized>(
    world: &WorldSpec,
    spec: &RandomizationSpec,
    arm_length: f64,
    rng: &mut R,
) -> WorldSpec {
    let Some(idx) = world.randomized_waypoint else {
        return world.clone();
    };
    let mut out = world.clone();
    if spec.waypoint_jitter == 0.0 {
        return out;
    }
    let nominal = world.track[idx].center;
    for _ in 0..32 {
        let offset = Vector3::from_fn(|_, _| symmetric(rng, spec.waypoint_jitter));
        out.track[idx].center = nominal + offset;
        if out.validate(arm_length).is_ok() {
            return out;
        }
    }
    out.track[idx].center = nominal;
    out
}
