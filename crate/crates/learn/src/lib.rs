//! Goal-conditioned soft actor-critic for the folding task.
//!
//! The actor sees rendered images (or tracked points in the `fixed`
//! baseline) while the twin critics see privileged cloth state. Experience is
//! augmented with hindsight goals and a share of demonstration trajectories.

// `!(x > 0.0)` is deliberate: it rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod buffer;
pub mod checkpoint;
mod error;
pub mod nn;
pub mod policy;
pub mod sac;
pub mod train;

pub use error::{LearnError, Result};
