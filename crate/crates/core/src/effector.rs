//! Point-mass effector driven by a task-space PD law with gravity compensation.
//!
//! The policy commands a desired displacement once per policy step; between
//! policy steps the setpoint is filtered toward the commanded target with the
//! fixed exponential rule in [`interpolate_setpoint`].

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Weight given to the commanded target at each interpolation iteration.
pub const INTERPOLATION_GAIN: f64 = 0.03;
/// Weight kept on the previous setpoint.
pub const INTERPOLATION_KEEP: f64 = 0.97;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectorState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
}

impl EffectorState {
    pub fn at_rest(position: Vec3, mass: f64) -> Self {
        Self { position, velocity: Vec3::zeros(), mass }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub kp: Vec3,
    pub kd: Vec3,
}

impl ControllerGains {
    /// Isotropic gains with `kd = 2 sqrt(kp m)`.
    pub fn critically_damped(kp: f64, mass: f64) -> Self {
        let kd = 2.0 * (kp * mass).sqrt();
        Self { kp: Vec3::repeat(kp), kd: Vec3::repeat(kd) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().chain(self.kd.iter()).all(|g| g.is_finite() && *g > 0.0) {
            Ok(())
        } else {
            Err(Error::Params(format!("controller gains must be > 0: kp={:?} kd={:?}", self.kp, self.kd)))
        }
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self::critically_damped(300.0, 1.0)
    }
}

/// One interpolation iteration: `0.03 (x_t + a_t) + 0.97 x_tj`.
pub fn interpolate_setpoint(x_t: Vec3, a_t: Vec3, x_tj: Vec3) -> Vec3 {
    (x_t + a_t) * INTERPOLATION_GAIN + x_tj * INTERPOLATION_KEEP
}

/// Task-space PD force plus gravity compensation.
pub fn osc_command(state: &EffectorState, setpoint: Vec3, gains: &ControllerGains, gravity: Vec3) -> Vec3 {
    gains.kp.component_mul(&(setpoint - state.position)) - gains.kd.component_mul(&state.velocity)
        - gravity * state.mass
}

/// Semi-implicit Euler on the point mass under `force + m g`.
pub fn step_effector(state: &EffectorState, force: Vec3, gravity: Vec3, dt: f64) -> Result<EffectorState> {
    if !(dt > 0.0) {
        return Err(Error::Params(format!("dt must be > 0, got {dt}")));
    }
    if !force.iter().all(|c| c.is_finite()) {
        return Err(Error::Numeric { index: 0, what: "effector force".into() });
    }
    let accel = force / state.mass + gravity;
    let velocity = state.velocity + accel * dt;
    let position = state.position + velocity * dt;
    Ok(EffectorState { position, velocity, mass: state.mass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gravity;

    #[test]
    fn interpolation_first_iterate() {
        let x = interpolate_setpoint(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::zeros());
        assert!((x.x - 0.03).abs() < 1e-15);
    }

    #[test]
    fn interpolation_fixed_point() {
        let x_t = Vec3::new(0.1, -0.2, 0.3);
        let a_t = Vec3::new(0.01, 0.02, -0.03);
        let target = x_t + a_t;
        let next = interpolate_setpoint(x_t, a_t, target);
        assert!((next - target).norm() < 1e-15);
    }

    #[test]
    fn ten_iterations_closed_form() {
        let mut x = Vec3::zeros();
        for _ in 0..10 {
            x = interpolate_setpoint(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), x);
        }
        let expected = 1.0 - 0.97f64.powi(10);
        assert!((x.x - expected).abs() < 1e-12);
        assert!((expected - 0.2626).abs() < 1e-4);
    }

    #[test]
    fn zero_error_leaves_only_compensation() {
        let s = EffectorState::at_rest(Vec3::new(0.1, 0.2, 0.3), 1.0);
        let f = osc_command(&s, s.position, &ControllerGains::default(), gravity());
        assert!((f - Vec3::new(0.0, 0.0, 9.81)).norm() < 1e-12);
    }

    #[test]
    fn proportional_law() {
        let gains = ControllerGains { kp: Vec3::repeat(100.0), kd: Vec3::repeat(20.0) };
        let s = EffectorState::at_rest(Vec3::zeros(), 1.0);
        let f = osc_command(&s, Vec3::new(0.01, 0.0, 0.0), &gains, Vec3::zeros());
        assert!((f - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn step_with_unit_force() {
        let s = EffectorState::at_rest(Vec3::zeros(), 1.0);
        let next = step_effector(&s, Vec3::new(1.0, 0.0, 0.0), Vec3::zeros(), 0.01).unwrap();
        assert!((next.velocity.x - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_net_force_keeps_state() {
        let s = EffectorState::at_rest(Vec3::new(0.5, 0.5, 0.5), 2.0);
        let next = step_effector(&s, Vec3::zeros(), Vec3::zeros(), 0.01).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn gravity_compensated_hold_does_not_drift() {
        let gains = ControllerGains::default();
        let mut s = EffectorState::at_rest(Vec3::new(0.0, 0.0, 0.2), 1.0);
        for _ in 0..100 {
            let f = osc_command(&s, s.position, &gains, gravity());
            let next = step_effector(&s, f, gravity(), 0.01).unwrap();
            assert!((next.position - s.position).norm() < 1e-9);
            s = next;
        }
    }

    #[test]
    fn non_finite_force_is_an_error() {
        let s = EffectorState::at_rest(Vec3::zeros(), 1.0);
        assert!(step_effector(&s, Vec3::new(f64::INFINITY, 0.0, 0.0), Vec3::zeros(), 0.01).is_err());
    }

    #[test]
    fn critically_damped_approach_does_not_overshoot() {
        let mass = 1.0;
        let gains = ControllerGains::critically_damped(300.0, mass);
        let setpoint = Vec3::new(0.1, 0.0, 0.0);
        let mut s = EffectorState::at_rest(Vec3::zeros(), mass);
        let mut prev_err = 0.1;
        for _ in 0..2000 {
            let f = osc_command(&s, setpoint, &gains, gravity());
            s = step_effector(&s, f, gravity(), 0.001).unwrap();
            let err = setpoint.x - s.position.x;
            assert!(err >= -1e-12, "overshoot: {err}");
            assert!(err <= prev_err + 1e-15);
            prev_err = err;
        }
    }
}
