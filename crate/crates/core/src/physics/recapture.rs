//! Analytic recaptured fraction for a thermal atom released from a tweezer.

use serde::{Deserialize, Serialize};

use super::lambert::lambert_w0;
use super::trap::TrapConfig;
use crate::error::{Error, Result};

/// A (temperature, release time) pair at which to evaluate the recapture fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecaptureQuery {
    temperature: f64,
    release_time: f64,
}

impl RecaptureQuery {
    pub fn new(temperature: f64, release_time: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::domain(format!("temperature must be positive, got {temperature}")));
        }
        if !(release_time.is_finite() && release_time >= 0.0) {
            return Err(Error::domain(format!("release time must be nonnegative, got {release_time}")));
        }
        Ok(Self { temperature, release_time })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn release_time(&self) -> f64 {
        self.release_time
    }

    /// Ratio of trap depth to thermal energy, U0 / (k_B T).
    pub fn eta(&self, trap: &TrapConfig) -> f64 {
        trap.trap_depth / self.temperature
    }

    /// Dimensionless squared release time 4 U0 t² / (m w0²).
    pub fn scaled_time_sq(&self, trap: &TrapConfig) -> f64 {
        scaled_time_sq(trap, self.release_time)
    }
}

pub(crate) fn scaled_time_sq(trap: &TrapConfig, t: f64) -> f64 {
    4.0 * trap.depth_energy() * t * t / (trap.atom_mass * trap.beam_waist * trap.beam_waist)
}

/// g(s) = 1 - e^{-s}
fn g(s: f64) -> f64 {
    -(-s).exp_m1()
}

/// Fraction of initially trapped atoms recaptured after free flight.
///
/// `f(T, t) = g(η W(t̃²) / t̃²) / g(η)` with the removable singularity at
/// `t = 0` returned as exactly one.
pub fn recapture_fraction(trap: &TrapConfig, query: RecaptureQuery) -> f64 {
    fraction(trap, query.temperature, query.release_time)
}

/// Unchecked form used on hot paths; callers guarantee `temperature > 0`, `t >= 0`.
pub(crate) fn fraction(trap: &TrapConfig, temperature: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let eta = trap.trap_depth / temperature;
    let x = scaled_time_sq(trap, t);
    if x == 0.0 {
        return 1.0;
    }
    // x is finite and positive here, so W cannot fail
    let ratio = lambert_w0(x).map(|w| w / x).unwrap_or(0.0);
    (g(eta * ratio) / g(eta)).clamp(0.0, 1.0)
}
