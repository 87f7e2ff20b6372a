use nalgebra::{Quaternion, Vector3};
use proptest::prelude::*;
use saferace::dynamics::{rk4_step, thrust_allocation, wrench_from_thrusts};
use saferace::{QuadrotorParams, QuadrotorState};

fn drag_free() -> QuadrotorParams {
    QuadrotorParams {
        drag: [0.0; 3],
        ..QuadrotorParams::default()
    }
}

fn integrate(mut s: QuadrotorState, f: [f64; 4], dt: f64, steps: usize, p: &QuadrotorParams) -> QuadrotorState {
    for _ in 0..steps {
        s = rk4_step(&s, &f, dt, p).unwrap();
    }
    s
}

fn spin_error(dt: f64) -> f64 {
    let p = QuadrotorParams {
        inertia: [0.003, 0.003, 0.005],
        ..drag_free()
    };
    let mut s = QuadrotorState::hover_at(Vector3::new(0.0, 0.0, 50.0), &p);
    s.body_rate = Vector3::new(0.0, 0.0, std::f64::consts::PI);
    let hover = [p.hover_thrust(); 4];
    let steps = (1.0 / dt).round() as usize;
    let s = integrate(s, hover, dt, steps, &p);
    // Half a turn about z: q = (cos(pi/2), 0, 0, sin(pi/2)).
    let want = Quaternion::new(0.0, 0.0, 0.0, 1.0);
    (s.attitude - want).norm()
}

#[test]
fn hover_is_a_fixed_point() {
    let p = QuadrotorParams::default();
    let start = QuadrotorState::hover_at(Vector3::new(1.0, -2.0, 3.0), &p);
    let one_step = rk4_step(&start, &[p.hover_thrust(); 4], 0.01, &p).unwrap();
    assert!((one_step.position - start.position).norm() < 1e-12);
    let end = integrate(start.clone(), [p.hover_thrust(); 4], 0.004, 250, &p);
    assert!((end.position - start.position).norm() < 1e-9);
    assert!(end.velocity.norm() < 1e-9);
    assert!((end.attitude - start.attitude).norm() < 1e-9);
    assert!(end.body_rate.norm() < 1e-9);
}

#[test]
fn drag_free_fall_matches_constant_acceleration() {
    let p = drag_free();
    let mut s = QuadrotorState::hover_at(Vector3::new(0.0, 0.0, 10.0), &p);
    s.rotor_thrusts = [0.0; 4];
    let end = integrate(s, [0.0; 4], 0.01, 100, &p);
    assert!((10.0 - end.position.z - 4.905).abs() < 1e-9);
    assert!((end.velocity.z + 9.81).abs() < 1e-9);
}

#[test]
fn z_spin_half_turn() {
    assert!(spin_error(0.01) < 1e-6);
}

#[test]
fn rk4_is_fourth_order() {
    let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125].iter().map(|&dt| spin_error(dt)).collect();
    for w in errs.windows(2) {
        let factor = w[0] / w[1];
        assert!((12.0..=20.0).contains(&factor), "factor {factor} from {errs:?}");
    }
}

#[test]
fn energy_conserved_without_drag_or_thrust() {
    let p = drag_free();
    let mut s = QuadrotorState::hover_at(Vector3::new(0.0, 0.0, 20.0), &p);
    s.rotor_thrusts = [0.0; 4];
    s.velocity = Vector3::new(1.5, -0.5, 4.0);
    let energy = |s: &QuadrotorState| 0.5 * p.mass * s.velocity.norm_squared() + p.mass * p.gravity * s.position.z;
    let e0 = energy(&s);
    let end = integrate(s, [0.0; 4], 0.004, 250, &p);
    assert!(((energy(&end) - e0) / e0).abs() < 1e-6);
}

#[test]
fn motor_lag_reaches_one_minus_inverse_e() {
    let p = QuadrotorParams::default();
    let mut s = QuadrotorState::hover_at(Vector3::new(0.0, 0.0, 50.0), &p);
    s.rotor_thrusts = [0.0; 4];
    let fd = [3.0; 4];
    let steps = (p.motor_tau / 0.0025).round() as usize;
    let end = integrate(s, fd, 0.0025, steps, &p);
    let want = 3.0 * (1.0 - (-1.0f64).exp());
    for f in end.rotor_thrusts {
        assert!((f - want).abs() < 1e-6, "{f} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn allocation_round_trip(f in prop::array::uniform4(0.2f64..6.8)) {
        let p = QuadrotorParams::default();
        let w = wrench_from_thrusts(&f, &p);
        let a = thrust_allocation(&w, &p);
        prop_assert!(!a.saturated);
        let back = wrench_from_thrusts(&a.thrusts, &p);
        let scale = w.mass_norm_thrust.abs() + w.torque.norm();
        prop_assert!((back.mass_norm_thrust - w.mass_norm_thrust).abs() <= 1e-12 * scale);
        prop_assert!((back.torque - w.torque).norm() <= 1e-12 * scale);
    }

    #[test]
    fn quaternion_stays_unit(
        q in prop::array::uniform4(-1.0f64..1.0),
        w in prop::array::uniform3(-10.0f64..10.0),
        v in prop::array::uniform3(-5.0f64..5.0),
        f in prop::array::uniform4(0.0f64..7.0),
    ) {
        let p = QuadrotorParams::default();
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        prop_assume!(quat.norm() > 0.1);
        let mut s = QuadrotorState::hover_at(Vector3::zeros(), &p);
        s.attitude = quat / quat.norm();
        s.body_rate = Vector3::from(w);
        s.velocity = Vector3::from(v);
        let next = rk4_step(&s, &f, 0.004, &p).unwrap();
        prop_assert!((next.attitude.norm() - 1.0).abs() < 1e-9);
        prop_assert!(next.rotor_thrusts.iter().all(|t| (0.0..=7.0).contains(t)));
    }
}
