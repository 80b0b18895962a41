use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{BOLTZMANN, POTASSIUM_41_MASS, TWEEZER_WAVELENGTH};

/// Optical tweezer parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Trap depth U0/k_B in kelvin.
    pub trap_depth: f64,
    /// 1/e² intensity radius at focus in metres.
    pub beam_waist: f64,
    /// Atomic mass in kilograms.
    pub atom_mass: f64,
    /// Laser wavelength in metres. Only the trajectory simulation uses it.
    pub wavelength: f64,
}

impl TrapConfig {
    pub fn new(trap_depth: f64, beam_waist: f64, atom_mass: f64, wavelength: f64) -> Result<Self> {
        let trap = Self { trap_depth, beam_waist, atom_mass, wavelength };
        trap.validate()?;
        Ok(trap)
    }

    /// ⁴¹K in a 790 nm tweezer with the given depth (K) and waist (m).
    pub fn potassium(trap_depth: f64, beam_waist: f64) -> Result<Self> {
        Self::new(trap_depth, beam_waist, POTASSIUM_41_MASS, TWEEZER_WAVELENGTH)
    }

    /// 290 µK deep tweezer with a 1.971 µm waist.
    pub fn deep() -> Self {
        Self::potassium(290e-6, 1.971e-6).expect("valid preset")
    }

    /// 110 µK shallow tweezer with a 1.971 µm waist.
    pub fn shallow() -> Self {
        Self::potassium(110e-6, 1.971e-6).expect("valid preset")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("trap_depth", self.trap_depth),
            ("beam_waist", self.beam_waist),
            ("atom_mass", self.atom_mass),
            ("wavelength", self.wavelength),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("{name} must be positive and finite, got {value}")));
            }
        }
        Ok(())
    }

    /// Trap depth in joules.
    pub fn depth_energy(&self) -> f64 {
        self.trap_depth * BOLTZMANN
    }

    /// Rayleigh range π w0² / λ in metres.
    pub fn rayleigh_range(&self) -> f64 {
        std::f64::consts::PI * self.beam_waist * self.beam_waist / self.wavelength
    }

    /// Default lower hypothesis bound: 5% of the trap depth.
    pub fn default_theta_min(&self) -> f64 {
        0.05 * self.trap_depth
    }
}
