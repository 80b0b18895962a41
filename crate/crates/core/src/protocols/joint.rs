//! Static joint posterior over temperature and mean loading.

use serde::{Deserialize, Serialize};

use super::record::MeasurementRecord;
use crate::error::{Error, Result};
use crate::inference::{HypothesisGrid, PriorSpec};
use crate::physics::{fraction, poisson_log_pmf, TrapConfig};

/// Log-spaced support for λ with a Jeffreys prior; `min == max` pins λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl LambdaRange {
    pub fn fixed(lambda: f64) -> Self {
        Self { min: lambda, max: lambda, points: 1 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
            return Err(Error::domain(format!("bad loading range [{}, {}]", self.min, self.max)));
        }
        if self.max > self.min && self.points < 2 {
            return Err(Error::domain("a loading range needs at least two points"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointPosterior {
    thetas: HypothesisGrid,
    lambdas: Vec<f64>,
    lambda_weights: Vec<f64>,
    /// Row-major over λ: `density[j * thetas.len() + i]` at (λ_j, θ_i).
    density: Vec<f64>,
}

impl JointPosterior {
    pub fn thetas(&self) -> &[f64] {
        self.thetas.thetas()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn density(&self, lambda_index: usize, theta_index: usize) -> f64 {
        self.density[lambda_index * self.thetas.len() + theta_index]
    }

    pub fn integral(&self) -> f64 {
        let w = self.thetas.weights();
        let m = self.thetas.len();
        self.lambda_weights
            .iter()
            .enumerate()
            .map(|(j, wl)| wl * self.density[j * m..(j + 1) * m].iter().zip(w).map(|(p, wt)| p * wt).sum::<f64>())
            .sum()
    }

    /// p(θ | data) with λ integrated out.
    pub fn theta_marginal(&self) -> Vec<f64> {
        let m = self.thetas.len();
        let mut out = vec![0.0; m];
        for (j, wl) in self.lambda_weights.iter().enumerate() {
            for (o, p) in out.iter_mut().zip(&self.density[j * m..(j + 1) * m]) {
                *o += wl * p;
            }
        }
        out
    }

    pub fn lambda_marginal(&self) -> Vec<f64> {
        let m = self.thetas.len();
        let w = self.thetas.weights();
        (0..self.lambdas.len())
            .map(|j| self.density[j * m..(j + 1) * m].iter().zip(w).map(|(p, wt)| p * wt).sum())
            .collect()
    }

    /// Posterior mean of λ.
    pub fn lambda_mean(&self) -> f64 {
        let marginal = self.lambda_marginal();
        let norm: f64 = self.lambda_weights.iter().zip(&marginal).map(|(w, p)| w * p).sum();
        let first: f64 = self.lambda_weights.iter().zip(&marginal).zip(&self.lambdas).map(|((w, p), l)| w * p * l).sum();
        first / norm
    }

    fn theta_expectation(&self, h: impl Fn(f64) -> f64) -> f64 {
        let marginal = self.theta_marginal();
        let logs = self.thetas.log_thetas();
        let w = self.thetas.weights();
        (0..marginal.len()).map(|i| w[i] * marginal[i] * h(logs[i])).sum()
    }

    /// exp of the joint mean of ln θ.
    pub fn estimate(&self) -> f64 {
        self.theta_expectation(|u| u).exp()
    }

    pub fn mean_log_error(&self, estimate: f64) -> f64 {
        let le = estimate.ln();
        self.theta_expectation(|u| (le - u) * (le - u))
    }
}

/// p(θ, λ | data) ∝ p(θ) p(λ) Πᵢ Poisson(nᵢ | λ f(θ, tᵢ)) with the calibration
/// counts entering at `t = 0`, normalised on the product grid.
pub fn two_parameter_posterior(
    record: &MeasurementRecord,
    spec: &PriorSpec,
    lambda: &LambdaRange,
    trap: &TrapConfig,
) -> Result<JointPosterior> {
    spec.validate()?;
    lambda.validate()?;
    trap.validate()?;
    let thetas = HypothesisGrid::log_spaced(spec.theta_min, spec.theta_max, spec.grid_points)?;
    let (lambdas, lambda_weights) = if lambda.max == lambda.min {
        (vec![lambda.min], vec![1.0])
    } else {
        let grid = HypothesisGrid::log_spaced(lambda.min, lambda.max, lambda.points)?;
        (grid.thetas().to_vec(), grid.weights().to_vec())
    };

    // tally (time, atoms) pairs so each distinct pair costs one likelihood evaluation
    let mut tally: Vec<(f64, u32, f64)> = Vec::new();
    let observations = record.calibration.iter().map(|&n| (0.0, n)).chain(record.shots.iter().map(|s| (s.time, s.atoms)));
    for (t, n) in observations {
        match tally.iter_mut().find(|e| e.0 == t && e.1 == n) {
            Some(e) => e.2 += 1.0,
            None => tally.push((t, n, 1.0)),
        }
    }
    let mut times: Vec<f64> = Vec::new();
    for e in &tally {
        if !times.contains(&e.0) {
            times.push(e.0);
        }
    }
    let fractions: Vec<Vec<f64>> =
        times.iter().map(|&t| thetas.thetas().iter().map(|&th| fraction(trap, th, t)).collect()).collect();

    let m = thetas.len();
    let theta_log_range = (spec.theta_max / spec.theta_min).ln();
    let lambda_log_range = if lambdas.len() > 1 { (lambda.max / lambda.min).ln() } else { 1.0 };
    let mut log_density = Vec::with_capacity(lambdas.len() * m);
    for &lam in &lambdas {
        let log_prior_lambda = if lambdas.len() > 1 { -(lam * lambda_log_range).ln() } else { 0.0 };
        for (i, &th) in thetas.thetas().iter().enumerate() {
            let mut lp = log_prior_lambda - (th * theta_log_range).ln();
            for &(t, n, count) in &tally {
                let k = times.iter().position(|&x| x == t).expect("tallied time");
                lp += count * poisson_log_pmf(lam * fractions[k][i], n);
            }
            log_density.push(lp);
        }
    }

    let peak = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let mut density: Vec<f64> = log_density.iter().map(|lp| (lp - peak).exp()).collect();
    let mut joint = JointPosterior { thetas, lambdas, lambda_weights, density: Vec::new() };
    joint.density = std::mem::take(&mut density);
    let z = joint.integral();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    joint.density.iter_mut().for_each(|p| *p /= z);
    Ok(joint)
}
