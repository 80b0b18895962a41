//! Monte-Carlo release–recapture with classical trajectories in a Gaussian beam.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{derive_seed, stream_rng};
use crate::error::{Error, Result};
use crate::physics::{fraction, TrapConfig};
use crate::units::{BOLTZMANN, STANDARD_GRAVITY};

const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GravityAxis {
    /// Along the beam.
    Axial,
    /// Perpendicular to the beam.
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPositions {
    /// Gaussian widths of the harmonic approximation at temperature T.
    Thermal,
    /// All atoms start at the trap centre.
    Centre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n_trajectories: usize,
    pub gravity_on: bool,
    /// Sample axial position and velocity; otherwise motion is confined to the focal plane.
    pub axial_on: bool,
    pub gravity_axis: GravityAxis,
    pub initial_positions: InitialPositions,
    /// Drop samples that are not bound before release and redraw.
    pub reject_untrapped: bool,
    pub seed: u64,
}

impl Default for TrajectoryConfig {
    /// 5000 trajectories with gravity and axial motion.
    fn default() -> Self {
        Self {
            n_trajectories: 5000,
            gravity_on: true,
            axial_on: true,
            gravity_axis: GravityAxis::Axial,
            initial_positions: InitialPositions::Thermal,
            reject_untrapped: true,
            seed: 0,
        }
    }
}

impl TrajectoryConfig {
    /// Focal-plane motion only, no gravity: the limit the closed form describes.
    pub fn planar(n_trajectories: usize, seed: u64) -> Self {
        Self { n_trajectories, gravity_on: false, axial_on: false, seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McFraction {
    pub fraction: f64,
    pub std_error: f64,
    /// Share of drawn samples that were unbound before release.
    pub untrapped_fraction: f64,
    pub trajectories: usize,
}

struct Beam {
    depth_per_mass: f64,
    waist_sq: f64,
    rayleigh: f64,
}

impl Beam {
    /// U(r, z)/m for the Gaussian beam.
    fn potential(&self, r_sq: f64, z: f64) -> f64 {
        let s = 1.0 + (z / self.rayleigh).powi(2);
        -self.depth_per_mass * (-2.0 * r_sq / (self.waist_sq * s)).exp() / s
    }
}

#[derive(Default)]
struct Tally {
    recaptured: usize,
    kept: usize,
    drawn: usize,
    unbound: usize,
}

/// Fraction of thermal atoms still bound after a free flight of `t` seconds.
pub fn mc_recapture_fraction(trap: &TrapConfig, temperature: f64, t: f64, cfg: &TrajectoryConfig) -> Result<McFraction> {
    trap.validate()?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::domain("temperature must be positive"));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain("release time must be nonnegative"));
    }
    if cfg.n_trajectories == 0 {
        return Err(Error::domain("need at least one trajectory"));
    }
    let beam = Beam {
        depth_per_mass: BOLTZMANN * trap.trap_depth / trap.atom_mass,
        waist_sq: trap.beam_waist * trap.beam_waist,
        rayleigh: trap.rayleigh_range(),
    };
    let ratio = temperature / trap.trap_depth;
    let thermal = cfg.initial_positions == InitialPositions::Thermal;
    let sigma_r = if thermal { 0.5 * trap.beam_waist * ratio.sqrt() } else { 0.0 };
    let sigma_z = if thermal && cfg.axial_on { beam.rayleigh * (0.5 * ratio).sqrt() } else { 0.0 };
    let sigma_v = (BOLTZMANN * temperature / trap.atom_mass).sqrt();
    let g = if cfg.gravity_on { STANDARD_GRAVITY } else { 0.0 };

    let chunks = cfg.n_trajectories.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let quota = CHUNK.min(cfg.n_trajectories - c * CHUNK);
            let mut rng = stream_rng(derive_seed(cfg.seed, 0x7472616a), c as u64);
            let mut tally = Tally::default();
            while tally.kept < quota {
                let mut gauss = || -> f64 { rng.sample(StandardNormal) };
                let (x, y) = (sigma_r * gauss(), sigma_r * gauss());
                let (vx, vy) = (sigma_v * gauss(), sigma_v * gauss());
                let (z, vz) = if cfg.axial_on { (sigma_z * gauss(), sigma_v * gauss()) } else { (0.0, 0.0) };
                tally.drawn += 1;
                let speed_sq = vx * vx + vy * vy + vz * vz;
                let bound = 0.5 * speed_sq + beam.potential(x * x + y * y, z) < 0.0;
                if !bound {
                    tally.unbound += 1;
                    if cfg.reject_untrapped {
                        continue;
                    }
                }
                let drop = 0.5 * g * t * t;
                let (mut x1, y1, mut z1) = (x + vx * t, y + vy * t, z + vz * t);
                let (mut vx1, mut vz1) = (vx, vz);
                match cfg.gravity_axis {
                    GravityAxis::Axial => {
                        z1 -= drop;
                        vz1 -= g * t;
                    }
                    GravityAxis::Radial => {
                        x1 -= drop;
                        vx1 -= g * t;
                    }
                }
                let kinetic = 0.5 * (vx1 * vx1 + vy * vy + vz1 * vz1);
                if kinetic + beam.potential(x1 * x1 + y1 * y1, z1) < 0.0 {
                    tally.recaptured += 1;
                }
                tally.kept += 1;
            }
            tally
        })
        .collect();

    let mut total = Tally::default();
    for t in tallies {
        total.recaptured += t.recaptured;
        total.kept += t.kept;
        total.drawn += t.drawn;
        total.unbound += t.unbound;
    }
    let n = total.kept as f64;
    let p = total.recaptured as f64 / n;
    Ok(McFraction {
        fraction: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        untrapped_fraction: total.unbound as f64 / total.drawn as f64,
        trajectories: total.kept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityCell {
    pub temperature: f64,
    pub time: f64,
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
    pub deviation: f64,
    pub untrapped_fraction: f64,
    pub flagged: bool,
}

/// Absolute slack added to three standard errors before a cell is flagged.
pub const VALIDITY_SLACK: f64 = 0.02;

/// Closed form against trajectories on a temperature × time table.
pub fn validity_scan(trap: &TrapConfig, temperatures: &[f64], times: &[f64], cfg: &TrajectoryConfig) -> Result<Vec<ValidityCell>> {
    let mut cells = Vec::with_capacity(temperatures.len() * times.len());
    for (i, &temperature) in temperatures.iter().enumerate() {
        for (j, &time) in times.iter().enumerate() {
            let cell_cfg = TrajectoryConfig { seed: derive_seed(cfg.seed, (i * times.len() + j) as u64), ..*cfg };
            let mc = mc_recapture_fraction(trap, temperature, time, &cell_cfg)?;
            let analytic = fraction(trap, temperature, time);
            let deviation = analytic - mc.fraction;
            cells.push(ValidityCell {
                temperature,
                time,
                analytic,
                simulated: mc.fraction,
                std_error: mc.std_error,
                deviation,
                untrapped_fraction: mc.untrapped_fraction,
                flagged: deviation.abs() > 3.0 * mc.std_error + VALIDITY_SLACK,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_atoms_stay() {
        let cfg = TrajectoryConfig::planar(20_000, 1);
        let mc = mc_recapture_fraction(&TrapConfig::deep(), 0.1e-6, 10e-6, &cfg).unwrap();
        assert!(mc.fraction >= 0.999, "{mc:?}");
    }

    #[test]
    fn point_source_matches_closed_form() {
        // centre start with bound velocities is exactly the closed-form setting
        let trap = TrapConfig::deep();
        for (temperature, t) in [(40e-6, 10e-6), (40e-6, 35e-6), (80e-6, 20e-6)] {
            let cfg = TrajectoryConfig { initial_positions: InitialPositions::Centre, ..TrajectoryConfig::planar(100_000, 5) };
            let mc = mc_recapture_fraction(&trap, temperature, t, &cfg).unwrap();
            let f = fraction(&trap, temperature, t);
            assert!((mc.fraction - f).abs() < 4.0 * mc.std_error, "T={temperature} t={t}: {} vs {f}", mc.fraction);
        }
    }

    #[test]
    fn deterministic_and_shrinking_errors() {
        let trap = TrapConfig::deep();
        let cfg = TrajectoryConfig::planar(10_000, 9);
        let a = mc_recapture_fraction(&trap, 40e-6, 35e-6, &cfg).unwrap();
        let b = mc_recapture_fraction(&trap, 40e-6, 35e-6, &cfg).unwrap();
        assert_eq!(a, b);
        let mut errors = Vec::new();
        for n in [2_500, 10_000, 40_000] {
            errors.push(mc_recapture_fraction(&trap, 40e-6, 35e-6, &TrajectoryConfig::planar(n, 2)).unwrap().std_error);
        }
        for w in errors.windows(2) {
            assert!((w[0] / w[1] - 2.0).abs() < 0.2, "{errors:?}");
        }
    }

    #[test]
    fn rejection_changes_untrapped_share_only_in_kept_samples() {
        let trap = TrapConfig::deep();
        let keep = TrajectoryConfig { reject_untrapped: false, ..TrajectoryConfig::planar(20_000, 4) };
        let mc = mc_recapture_fraction(&trap, 125e-6, 20e-6, &keep).unwrap();
        assert!(mc.untrapped_fraction > 0.05);
        let reject = TrajectoryConfig::planar(20_000, 4);
        let r = mc_recapture_fraction(&trap, 125e-6, 20e-6, &reject).unwrap();
        assert_eq!(r.trajectories, 20_000);
        assert!(r.fraction > mc.fraction);
    }

    #[test]
    fn cold_rows_are_never_flagged() {
        let cells = validity_scan(&TrapConfig::shallow(), &[0.5e-6], &[10e-6, 40e-6], &TrajectoryConfig::default()).unwrap();
        assert!(cells.iter().all(|c| !c.flagged));
    }
}
