use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Closed interval `[low, high]`, serialized as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    pub fn fixed(value: f64) -> Self {
        Range(value, value)
    }

    pub fn low(&self) -> f64 {
        self.0
    }

    pub fn high(&self) -> f64 {
        self.1
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.0 + self.1)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) || self.0 > self.1 {
            return Err(Error::Config(format!("range {name} = [{}, {}] is inverted or non-finite", self.0, self.1)));
        }
        Ok(())
    }

    /// Uniform draw; a zero-width range returns its bound exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.0 + (self.1 - self.0) * u
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.0 && value <= self.1
    }
}
