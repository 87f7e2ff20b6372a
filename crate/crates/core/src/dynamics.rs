//! Rigid-body quadrotor model.
//!
//! State is integrated in continuous time: translational and rotational
//! rigid-body motion with linear rotor drag, plus a first-order lag per rotor
//! between commanded and produced thrust. Time stepping is classical RK4 with
//! the commanded thrusts held constant across the step.
//!
//! Rotor layout (body frame, x forward, z up), matching the mixer below:
//!
//! ```text
//!   f4  f1        roll  torque  ∝ ( f1 - f2 - f3 + f4)
//!     \/          pitch torque  ∝ (-f1 - f2 + f3 + f4)
//!     /\          yaw   torque  ∝ ( f1 - f2 + f3 - f4)
//!   f3  f2
//! ```

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Physical and low-level control parameters of the vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrotorParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the inertia matrix, kg·m².
    pub inertia: [f64; 3],
    /// m
    pub arm_length: f64,
    /// Yaw moment per unit rotor thrust, m.
    pub torque_const: f64,
    /// Linear rotor-drag coefficients (d_x, d_y, d_z).
    pub drag: [f64; 3],
    /// Rotor first-order lag time constant, s.
    pub motor_tau: f64,
    /// Per-rotor thrust range [f_min, f_max], N.
    pub thrust_limits: [f64; 2],
    /// m/s²
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Proportional body-rate gains of the low-level controller, 1/s.
    pub body_rate_gains: [f64; 3],
    /// Ratio of produced to commanded rotor thrust. The controller assumes 1;
    /// domain randomization perturbs it.
    #[serde(default = "default_thrust_gain")]
    pub thrust_gain: f64,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

fn default_thrust_gain() -> f64 {
    1.0
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: [0.0025, 0.0021, 0.0043],
            arm_length: 0.15,
            torque_const: 0.022,
            drag: [0.26, 0.28, 0.42],
            motor_tau: 0.05,
            thrust_limits: [0.0, 7.0],
            gravity: STANDARD_GRAVITY,
            body_rate_gains: [20.0, 20.0, 8.0],
            thrust_gain: 1.0,
        }
    }
}

impl QuadrotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(key, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("mass", self.mass)?;
        for &j in &self.inertia {
            positive("inertia", j)?;
        }
        positive("arm_length", self.arm_length)?;
        positive("motor_tau", self.motor_tau)?;
        positive("thrust_limits", self.thrust_limits[1])?;
        positive("thrust_gain", self.thrust_gain)?;
        for &k in &self.body_rate_gains {
            positive("body_rate_gains", k)?;
        }
        if !self.torque_const.is_finite() {
            return Err(Error::param("torque_const", "must be finite"));
        }
        if self.drag.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::param("drag", "coefficients must be finite and >= 0"));
        }
        let [f_min, f_max] = self.thrust_limits;
        if !(f_min >= 0.0 && f_min <= f_max) {
            return Err(Error::param(
                "thrust_limits",
                format!("need 0 <= f_min <= f_max, got [{f_min}, {f_max}]"),
            ));
        }
        if !self.gravity.is_finite() {
            return Err(Error::param("gravity", "must be finite"));
        }
        Ok(())
    }

    pub fn inertia_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity / 4.0
    }

    fn clamp_rotor(&self, f: f64) -> f64 {
        f.clamp(self.thrust_limits[0], self.thrust_limits[1])
    }
}

/// Integrated vehicle state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrotorState {
    /// World frame, m.
    pub position: Vector3<f64>,
    /// World frame, m/s.
    pub velocity: Vector3<f64>,
    /// Rotation world←body, unit norm outside integration stages.
    pub attitude: Quaternion<f64>,
    /// Body frame, rad/s.
    pub body_rate: Vector3<f64>,
    /// Current produced thrust of each rotor, N.
    pub rotor_thrusts: [f64; 4],
}

impl QuadrotorState {
    /// At rest at `position`, level, rotors producing hover thrust.
    pub fn hover_at(position: Vector3<f64>, params: &QuadrotorParams) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: Quaternion::identity(),
            body_rate: Vector3::zeros(),
            rotor_thrusts: [params.hover_thrust(); 4],
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        UnitQuaternion::new_normalize(self.attitude)
            .to_rotation_matrix()
            .into_inner()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
            && self.body_rate.iter().all(|v| v.is_finite())
            && self.rotor_thrusts.iter().all(|v| v.is_finite())
    }

    fn advanced(&self, d: &StateDerivative, h: f64) -> Self {
        let mut rotor_thrusts = self.rotor_thrusts;
        for (f, df) in rotor_thrusts.iter_mut().zip(d.rotor_thrusts) {
            *f += h * df;
        }
        Self {
            position: self.position + d.position * h,
            velocity: self.velocity + d.velocity * h,
            attitude: self.attitude + d.attitude * h,
            body_rate: self.body_rate + d.body_rate * h,
            rotor_thrusts,
        }
    }
}

/// Time derivative of [`QuadrotorState`], component for component.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Quaternion<f64>,
    pub body_rate: Vector3<f64>,
    pub rotor_thrusts: [f64; 4],
}

/// Collective command accepted by the low-level controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyCommand {
    /// Sum of the four rotor thrusts, N.
    pub collective_thrust: f64,
    /// Body-rate setpoint, rad/s.
    pub body_rate: Vector3<f64>,
}

/// Mass-normalized collective thrust and body torque.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    /// m/s²
    pub mass_norm_thrust: f64,
    /// N·m, body frame.
    pub torque: Vector3<f64>,
}

/// Rotor thrusts produced by the mixer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub thrusts: [f64; 4],
    /// Set when at least one rotor was clamped to its limits.
    pub saturated: bool,
}

const ROLL_MIX: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
const PITCH_MIX: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
const YAW_MIX: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

fn mix(pattern: &[f64; 4], f: &[f64; 4]) -> f64 {
    pattern.iter().zip(f).map(|(s, f)| s * f).sum()
}

pub fn wrench_from_thrusts(f: &[f64; 4], params: &QuadrotorParams) -> Wrench {
    let lever = params.arm_length / std::f64::consts::SQRT_2;
    Wrench {
        mass_norm_thrust: f.iter().sum::<f64>() / params.mass,
        torque: Vector3::new(
            lever * mix(&ROLL_MIX, f),
            lever * mix(&PITCH_MIX, f),
            params.torque_const * mix(&YAW_MIX, f),
        ),
    }
}

/// Inverse of [`wrench_from_thrusts`] followed by per-rotor clamping.
///
/// The four mixing patterns are mutually orthogonal with squared norm 4, so
/// the inverse is the transposed pattern matrix scaled by 1/4.
pub fn thrust_allocation(wrench: &Wrench, params: &QuadrotorParams) -> Allocation {
    let lever = params.arm_length / std::f64::consts::SQRT_2;
    let collective = wrench.mass_norm_thrust * params.mass;
    let roll = wrench.torque.x / lever;
    let pitch = wrench.torque.y / lever;
    // A zero torque constant leaves yaw uncontrollable; drop the yaw demand.
    let yaw = if params.torque_const != 0.0 {
        wrench.torque.z / params.torque_const
    } else {
        0.0
    };

    let mut thrusts = [0.0; 4];
    let mut saturated = false;
    for (i, f) in thrusts.iter_mut().enumerate() {
        let raw = 0.25 * (collective + ROLL_MIX[i] * roll + PITCH_MIX[i] * pitch + YAW_MIX[i] * yaw);
        let clamped = params.clamp_rotor(raw);
        saturated |= clamped != raw;
        *f = clamped;
    }
    Allocation { thrusts, saturated }
}

/// Proportional body-rate control with gyroscopic feed-forward.
pub fn body_rate_controller(
    state: &QuadrotorState,
    cmd: &BodyCommand,
    params: &QuadrotorParams,
) -> Allocation {
    let [f_min, f_max] = params.thrust_limits;
    let collective = cmd.collective_thrust.clamp(4.0 * f_min, 4.0 * f_max);
    let inertia = params.inertia_matrix();
    let gains = Vector3::from(params.body_rate_gains);
    let omega = state.body_rate;
    let rate_error = cmd.body_rate - omega;
    let torque = inertia * gains.component_mul(&rate_error) + omega.cross(&(inertia * omega));
    thrust_allocation(
        &Wrench {
            mass_norm_thrust: collective / params.mass,
            torque,
        },
        params,
    )
}

pub fn state_derivative(
    state: &QuadrotorState,
    f_desired: &[f64; 4],
    params: &QuadrotorParams,
) -> StateDerivative {
    let wrench = wrench_from_thrusts(&state.rotor_thrusts, params);
    let rot = state.rotation();
    let drag = Matrix3::from_diagonal(&Vector3::from(params.drag));

    let thrust_acc = rot * Vector3::new(0.0, 0.0, wrench.mass_norm_thrust);
    let drag_acc = rot * drag * rot.transpose() * state.velocity;
    let velocity = thrust_acc - Vector3::new(0.0, 0.0, params.gravity) - drag_acc;

    let omega = state.body_rate;
    let attitude = state.attitude * Quaternion::from_imag(omega) * 0.5;

    let inertia = Vector3::from(params.inertia);
    let momentum = inertia.component_mul(&omega);
    let body_rate = (wrench.torque - omega.cross(&momentum)).component_div(&inertia);

    let mut rotor_thrusts = [0.0; 4];
    for (i, df) in rotor_thrusts.iter_mut().enumerate() {
        *df = (f_desired[i] - state.rotor_thrusts[i]) / params.motor_tau;
    }

    StateDerivative {
        position: state.velocity,
        velocity,
        attitude,
        body_rate,
        rotor_thrusts,
    }
}

/// One classical RK4 step of length `dt` with `f_desired` held constant.
///
/// `f_desired` is the commanded thrust; the produced target is scaled by
/// `thrust_gain` and clamped to the rotor limits before integration.
pub fn rk4_step(
    state: &QuadrotorState,
    f_desired: &[f64; 4],
    dt: f64,
    params: &QuadrotorParams,
) -> Result<QuadrotorState> {
    debug_assert!(dt > 0.0);
    let mut target = [0.0; 4];
    for (t, f) in target.iter_mut().zip(f_desired) {
        *t = params.clamp_rotor(params.thrust_gain * f);
    }

    let k1 = state_derivative(state, &target, params);
    let k2 = state_derivative(&state.advanced(&k1, 0.5 * dt), &target, params);
    let k3 = state_derivative(&state.advanced(&k2, 0.5 * dt), &target, params);
    let k4 = state_derivative(&state.advanced(&k3, dt), &target, params);

    let combined = StateDerivative {
        position: (k1.position + (k2.position + k3.position) * 2.0 + k4.position) / 6.0,
        velocity: (k1.velocity + (k2.velocity + k3.velocity) * 2.0 + k4.velocity) / 6.0,
        attitude: (k1.attitude + (k2.attitude + k3.attitude) * 2.0 + k4.attitude) / 6.0,
        body_rate: (k1.body_rate + (k2.body_rate + k3.body_rate) * 2.0 + k4.body_rate) / 6.0,
        rotor_thrusts: std::array::from_fn(|i| {
            (k1.rotor_thrusts[i]
                + 2.0 * (k2.rotor_thrusts[i] + k3.rotor_thrusts[i])
                + k4.rotor_thrusts[i])
                / 6.0
        }),
    };

    let mut next = state.advanced(&combined, dt);
    if !next.is_finite() {
        return Err(Error::SimulationDiverged);
    }
    let norm = next.attitude.norm();
    if norm == 0.0 {
        return Err(Error::SimulationDiverged);
    }
    next.attitude /= norm;
    for f in next.rotor_thrusts.iter_mut() {
        *f = params.clamp_rotor(*f);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;
    use proptest::prelude::*;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr, $tol:expr) => {{
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() <= $tol, "{} vs {} (tol {})", a, b, $tol);
            }};
        }
        pub(crate) use assert_close;
    }

    fn params() -> QuadrotorParams {
        QuadrotorParams::default()
    }

    #[test]
    fn symmetric_thrust_has_no_torque() {
        let p = params();
        for f in [0.0, 1.3, 7.0] {
            let w = wrench_from_thrusts(&[f; 4], &p);
            assert_eq!(w.torque, Vector3::zeros());
            assert_close!(w.mass_norm_thrust, 4.0 * f / p.mass, 1e-15);
        }
    }

    #[test]
    fn single_rotor_wrench() {
        let p = params();
        let w = wrench_from_thrusts(&[1.0, 0.0, 0.0, 0.0], &p);
        assert_close!(w.torque.x, 0.106066017177982, 1e-12);
        assert_close!(w.torque.y, -0.106066017177982, 1e-12);
        assert_close!(w.torque.z, 0.022, 1e-15);
        assert_close!(w.mass_norm_thrust, 1.0, 1e-15);
    }

    #[test]
    fn allocation_inverts_mixer() {
        let mut p = params();
        p.thrust_limits = [0.0, 100.0];
        let w = wrench_from_thrusts(&[1.0, 2.0, 3.0, 4.0], &p);
        let a = thrust_allocation(&w, &p);
        assert!(!a.saturated);
        for (got, want) in a.thrusts.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_close!(*got, want, 1e-12);
        }
    }

    #[test]
    fn allocation_hover_and_saturation() {
        let p = params();
        let hover = thrust_allocation(
            &Wrench {
                mass_norm_thrust: 4.0 * 2.0 / p.mass,
                torque: Vector3::zeros(),
            },
            &p,
        );
        assert_eq!(hover.thrusts, [2.0; 4]);
        assert!(!hover.saturated);

        let f_max = p.thrust_limits[1];
        let sat = thrust_allocation(
            &Wrench {
                mass_norm_thrust: 10.0 * 4.0 * f_max / p.mass,
                torque: Vector3::zeros(),
            },
            &p,
        );
        assert_eq!(sat.thrusts, [f_max; 4]);
        assert!(sat.saturated);
    }

    #[test]
    fn controller_hover_and_single_axis() {
        let p = params();
        let state = QuadrotorState::hover_at(Vector3::zeros(), &p);
        let hover = body_rate_controller(
            &state,
            &BodyCommand {
                collective_thrust: p.mass * p.gravity,
                body_rate: Vector3::zeros(),
            },
            &p,
        );
        for f in hover.thrusts {
            assert_close!(f, p.mass * p.gravity / 4.0, 1e-12);
        }

        let roll = body_rate_controller(
            &state,
            &BodyCommand {
                collective_thrust: p.mass * p.gravity,
                body_rate: Vector3::new(1.0, 0.0, 0.0),
            },
            &p,
        );
        let w = wrench_from_thrusts(&roll.thrusts, &p);
        assert_close!(w.torque.x, p.inertia[0] * p.body_rate_gains[0], 1e-12);
        assert_close!(w.torque.y, 0.0, 1e-12);
        assert_close!(w.torque.z, 0.0, 1e-12);
    }

    /// Scalar restatement of the control law, written out per component.
    fn controller_oracle(
        omega: [f64; 3],
        omega_des: [f64; 3],
        collective: f64,
        p: &QuadrotorParams,
    ) -> [f64; 4] {
        let j = p.inertia;
        let k = p.body_rate_gains;
        let jw = [j[0] * omega[0], j[1] * omega[1], j[2] * omega[2]];
        let gyro = [
            omega[1] * jw[2] - omega[2] * jw[1],
            omega[2] * jw[0] - omega[0] * jw[2],
            omega[0] * jw[1] - omega[1] * jw[0],
        ];
        let tx = j[0] * k[0] * (omega_des[0] - omega[0]) + gyro[0];
        let ty = j[1] * k[1] * (omega_des[1] - omega[1]) + gyro[1];
        let tz = j[2] * k[2] * (omega_des[2] - omega[2]) + gyro[2];
        let a = p.arm_length / 2f64.sqrt();
        let t = collective.clamp(4.0 * p.thrust_limits[0], 4.0 * p.thrust_limits[1]);
        let raw = [
            (t + tx / a - ty / a + tz / p.torque_const) / 4.0,
            (t - tx / a - ty / a - tz / p.torque_const) / 4.0,
            (t - tx / a + ty / a + tz / p.torque_const) / 4.0,
            (t + tx / a + ty / a - tz / p.torque_const) / 4.0,
        ];
        raw.map(|f| f.clamp(p.thrust_limits[0], p.thrust_limits[1]))
    }

    proptest! {
        #[test]
        fn controller_matches_scalar_oracle(
            omega in prop::array::uniform3(-10.0f64..10.0),
            omega_des in prop::array::uniform3(-8.0f64..8.0),
            collective in 0.0f64..30.0,
        ) {
            let p = params();
            let mut state = QuadrotorState::hover_at(Vector3::zeros(), &p);
            state.body_rate = Vector3::from(omega);
            let got = body_rate_controller(
                &state,
                &BodyCommand { collective_thrust: collective, body_rate: Vector3::from(omega_des) },
                &p,
            );
            let want = controller_oracle(omega, omega_des, collective, &p);
            for (g, w) in got.thrusts.iter().zip(want) {
                prop_assert!((g - w).abs() <= 1e-10 * (1.0 + w.abs()), "{g} vs {w}");
            }
        }

        #[test]
        fn drag_opposes_velocity(
            v in prop::array::uniform3(-20.0f64..20.0),
            q in prop::array::uniform4(-1.0f64..1.0),
            d in 0.0f64..1.0,
        ) {
            let mut p = params();
            p.drag = [d; 3];
            let qn = Quaternion::new(q[0], q[1], q[2], q[3]);
            prop_assume!(qn.norm() > 1e-3);
            let state = QuadrotorState {
                position: Vector3::zeros(),
                velocity: Vector3::from(v),
                attitude: qn / qn.norm(),
                body_rate: Vector3::zeros(),
                rotor_thrusts: [0.0; 4],
            };
            let dv = state_derivative(&state, &[0.0; 4], &p).velocity + Vector3::new(0.0, 0.0, p.gravity);
            prop_assert!(dv.dot(&state.velocity) <= 1e-12);
        }
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = params();
        let s = QuadrotorState::hover_at(Vector3::new(1.0, 2.0, 3.0), &p);
        let d = state_derivative(&s, &s.rotor_thrusts, &p);
        assert_eq!(d.position, Vector3::zeros());
        assert!(d.velocity.norm() < 1e-15);
        assert_eq!(d.attitude, Quaternion::new(0.0, 0.0, 0.0, 0.0));
        assert_eq!(d.body_rate, Vector3::zeros());
        assert_eq!(d.rotor_thrusts, [0.0; 4]);
    }

    #[test]
    fn free_fall_and_drag_terms() {
        let p = params();
        let mut s = QuadrotorState::hover_at(Vector3::zeros(), &p);
        s.rotor_thrusts = [0.0; 4];
        let d = state_derivative(&s, &[0.0; 4], &p);
        assert_eq!(d.velocity, Vector3::new(0.0, 0.0, -9.81));

        s.velocity = Vector3::new(1.0, 0.0, 0.0);
        let d = state_derivative(&s, &[0.0; 4], &p);
        let drag = d.velocity + Vector3::new(0.0, 0.0, p.gravity);
        assert_close!(drag.x, -0.26, 1e-15);
        assert_close!(drag.y, 0.0, 1e-15);
        assert_close!(drag.z, 0.0, 1e-15);
    }

    #[test]
    fn rk4_rejects_non_finite() {
        let p = params();
        let mut s = QuadrotorState::hover_at(Vector3::zeros(), &p);
        s.velocity.x = f64::NAN;
        assert!(matches!(
            rk4_step(&s, &[1.0; 4], 0.004, &p),
            Err(Error::SimulationDiverged)
        ));
    }

    #[test]
    fn thrust_gain_scales_produced_thrust() {
        let mut p = params();
        p.thrust_gain = 0.5;
        let mut s = QuadrotorState::hover_at(Vector3::zeros(), &p);
        s.rotor_thrusts = [0.0; 4];
        for _ in 0..500 {
            s = rk4_step(&s, &[4.0; 4], 0.004, &p).unwrap();
        }
        for f in s.rotor_thrusts {
            assert_close!(f, 2.0, 1e-6);
        }
    }

    #[test]
    fn validate_rejects_bad_params() {
        let mut p = params();
        p.mass = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.thrust_limits = [3.0, 2.0];
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }
}
