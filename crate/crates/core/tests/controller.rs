use dynfold_core::effector::{interpolate_setpoint, osc_command, step_effector, ControllerGains, EffectorState};
use dynfold_core::{gravity, Vec3};

fn settle_time(dt: f64) -> (Option<f64>, f64) {
    let gains = ControllerGains::default();
    let g = gravity();
    let setpoint = Vec3::new(0.2, -0.1, 0.3);
    let mut state = EffectorState::at_rest(setpoint + Vec3::new(0.1, 0.0, 0.0), 1.0);
    let mut reached = None;
    let mut worst_late = 0.0_f64;
    let steps = (10.0 / dt).round() as usize;
    for i in 1..=steps {
        let f = osc_command(&state, setpoint, &gains, g);
        state = step_effector(&state, f, g, dt).unwrap();
        let t = i as f64 * dt;
        let err = (state.position - setpoint).norm();
        if reached.is_none() && err < 0.02 {
            reached = Some(t);
        }
        if t > 2.0 {
            worst_late = worst_late.max(err);
        }
    }
    (reached, worst_late)
}

#[test]
fn default_gains_converge_within_two_seconds() {
    for dt in [1e-3, 1e-2] {
        let (reached, worst_late) = settle_time(dt);
        let t = reached.expect("never within 2 cm");
        assert!(t <= 2.0, "dt {dt}: reached at {t}");
        assert!(worst_late < 0.02, "dt {dt}: drifted to {worst_late}");
    }
}

#[test]
fn interpolation_residual_shrinks_by_exactly_keep_factor() {
    let x_t = Vec3::new(0.1, 0.2, -0.3);
    let a = Vec3::new(0.03, -0.01, 0.02);
    let target = x_t + a;
    let mut x = Vec3::new(-0.4, 0.5, 0.9);
    let start = x;
    for _ in 0..10 {
        let next = interpolate_setpoint(x_t, a, x);
        for k in 0..3 {
            let ratio = (next[k] - target[k]) / (x[k] - target[k]);
            assert!((ratio - 0.97).abs() <= 1e-12 * 0.97, "ratio {ratio}");
        }
        x = next;
    }
    let progress = 1.0 - (x - target).norm() / (start - target).norm();
    assert!((progress - (1.0 - 0.97_f64.powi(10))).abs() < 1e-9);
    assert!((progress - 0.2626).abs() < 1e-4);
}
