//! Simulation side of the dynamic cloth-folding stack.
//!
//! * [`cloth`] - spring-damper grid cloth with one corner rigidly attached to the effector.
//! * [`effector`] - point-mass effector, task-space PD controller and setpoint interpolation.
//! * [`render`] - software rasterizer producing grayscale observations and corner labels.
//! * [`env`] - the goal-conditioned sideways-fold episode.
//! * [`randomization`] - cloth parameter sampling, scripted demonstrations, top-M fabric pools.

// `!(x > 0.0)` is deliberate: it rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloth;
pub mod effector;
pub mod env;
pub mod error;
pub mod randomization;
pub mod render;
pub mod sampling;

pub use error::{Error, Result};
pub use sampling::Range;

/// 3D vector in meters (or m/s, N) depending on context.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Standard gravity used by the default configuration.
pub const GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

pub fn gravity() -> Vec3 {
    Vec3::from(GRAVITY)
}
