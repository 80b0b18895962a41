//! Conventional least-squares fit of per-time mean atom numbers to λ f(T, t).

use serde::{Deserialize, Serialize};

use super::record::{MeasurementRecord, TimeGroup};
use crate::error::{Error, Result};
use crate::physics::{fraction, TrapConfig};

const MIN_TEMPERATURE: f64 = 1e-9;
const MAX_TEMPERATURE: f64 = 1e-2;
const LOG_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Starting temperature in kelvin.
    pub initial_temperature: f64,
    /// Known mean loading; turns the fit into a one-parameter fit in T.
    pub fix_lambda: Option<f64>,
    pub max_iterations: usize,
    /// Relative step size below which the fit counts as converged.
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { initial_temperature: (14.5e-6f64 * 125e-6).sqrt(), fix_lambda: None, max_iterations: 200, tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub temperature: f64,
    pub temperature_sigma: f64,
    pub lambda_fit: f64,
    /// Zero when λ was held fixed.
    pub lambda_sigma: f64,
    /// Weighted residual sum of squares.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Problem<'a> {
    trap: &'a TrapConfig,
    groups: Vec<TimeGroup>,
    fixed: Option<f64>,
}

impl Problem<'_> {
    fn params(&self) -> usize {
        if self.fixed.is_some() {
            1
        } else {
            2
        }
    }

    fn lambda(&self, x: &[f64; 2]) -> f64 {
        self.fixed.unwrap_or(x[1])
    }

    /// Weighted residuals √αᵢ (n̄ᵢ − λ f(T, tᵢ)) in the parameters (ln T, λ).
    fn residuals(&self, x: &[f64; 2]) -> Vec<f64> {
        let temperature = x[0].exp();
        let lambda = self.lambda(x);
        self.groups
            .iter()
            .map(|g| (g.count as f64).sqrt() * (g.mean - lambda * fraction(self.trap, temperature, g.time)))
            .collect()
    }

    /// Jacobian of the residuals, central differences in ln T.
    fn jacobian(&self, x: &[f64; 2]) -> Vec<[f64; 2]> {
        let lambda = self.lambda(x);
        let (lo, hi) = ((x[0] - LOG_STEP).exp(), (x[0] + LOG_STEP).exp());
        let temperature = x[0].exp();
        self.groups
            .iter()
            .map(|g| {
                let w = (g.count as f64).sqrt();
                let df = (fraction(self.trap, hi, g.time) - fraction(self.trap, lo, g.time)) / (2.0 * LOG_STEP);
                [-w * lambda * df, -w * fraction(self.trap, temperature, g.time)]
            })
            .collect()
    }

    fn normal_equations(&self, x: &[f64; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
        let r = self.residuals(x);
        let jac = self.jacobian(x);
        let p = self.params();
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for (row, ri) in jac.iter().zip(&r) {
            for i in 0..p {
                g[i] += row[i] * ri;
                for j in 0..p {
                    a[i][j] += row[i] * row[j];
                }
            }
        }
        (a, g)
    }

    fn clamp(&self, mut x: [f64; 2]) -> [f64; 2] {
        x[0] = x[0].clamp(MIN_TEMPERATURE.ln(), MAX_TEMPERATURE.ln());
        x[1] = x[1].max(0.0);
        x
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solves the 1×1 or 2×2 system a δ = b; `None` when singular.
fn solve(a: &[[f64; 2]; 2], b: &[f64; 2], p: usize) -> Option<[f64; 2]> {
    if p == 1 {
        return (a[0][0] > 0.0).then(|| [b[0] / a[0][0], 0.0]);
    }
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det.abs() > 0.0) || !det.is_finite() {
        return None;
    }
    Some([(b[0] * a[1][1] - b[1] * a[0][1]) / det, (a[0][0] * b[1] - a[1][0] * b[0]) / det])
}

fn invert(a: &[[f64; 2]; 2], p: usize) -> Option<[[f64; 2]; 2]> {
    let c0 = solve(a, &[1.0, 0.0], p)?;
    if p == 1 {
        return Some([[c0[0], 0.0], [0.0, 0.0]]);
    }
    let c1 = solve(a, &[0.0, 1.0], p)?;
    Some([[c0[0], c1[0]], [c0[1], c1[1]]])
}

/// Levenberg–Marquardt minimisation of Σᵢ αᵢ (n̄ᵢ − λ f(T, tᵢ))² over the
/// distinct release times of `record`, the calibration mean included at `t = 0`.
pub fn least_squares_fit(record: &MeasurementRecord, trap: &TrapConfig, options: &FitOptions) -> Result<FitResult> {
    fit_time_groups(trap, record.time_groups(), record.calibration_mean(), options)
}

pub(crate) fn fit_time_groups(
    trap: &TrapConfig,
    groups: Vec<TimeGroup>,
    lambda_hint: Option<f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    trap.validate()?;
    if !(options.initial_temperature > 0.0 && options.initial_temperature.is_finite()) {
        return Err(Error::Fit("initial temperature must be positive".into()));
    }
    if let Some(lambda) = options.fix_lambda {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Fit(format!("fixed mean loading must be positive, got {lambda}")));
        }
    }
    let problem = Problem { trap, groups, fixed: options.fix_lambda };
    let p = problem.params();
    if problem.groups.len() < p + 1 {
        return Err(Error::Fit(format!(
            "{} distinct release times cannot constrain a {p}-parameter fit",
            problem.groups.len()
        )));
    }

    let initial_lambda = options
        .fix_lambda
        .or(lambda_hint)
        .unwrap_or_else(|| problem.groups[0].mean)
        .max(1e-6);
    let mut x = problem.clamp([options.initial_temperature.ln(), initial_lambda]);
    let mut current = cost(&problem.residuals(&x));
    let mut damping = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (a, g) = problem.normal_equations(&x);
        let mut accepted = false;
        while damping < 1e12 {
            let mut damped = a;
            for i in 0..p {
                damped[i][i] += damping * a[i][i].max(1e-12);
            }
            let Some(delta) = solve(&damped, &[-g[0], -g[1]], p) else {
                damping *= 10.0;
                continue;
            };
            let trial = problem.clamp([x[0] + delta[0], x[1] + delta[1]]);
            let trial_cost = cost(&problem.residuals(&trial));
            if trial_cost <= current {
                let step_t = (trial[0] - x[0]).abs();
                let step_l = if p == 2 { (trial[1] - x[1]).abs() / trial[1].max(1e-12) } else { 0.0 };
                x = trial;
                current = trial_cost;
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                if step_t.max(step_l) < options.tolerance {
                    converged = true;
                }
                break;
            }
            damping *= 4.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
        }
        if converged {
            break;
        }
    }

    let temperature = x[0].exp();
    let lambda_fit = problem.lambda(&x);
    let (a, _) = problem.normal_equations(&x);
    let dof = (problem.groups.len() - p) as f64;
    let scale = current / dof;
    let (temperature_sigma, lambda_sigma) = match invert(&a, p) {
        Some(cov) => (temperature * (scale * cov[0][0]).max(0.0).sqrt(), if p == 2 { (scale * cov[1][1]).max(0.0).sqrt() } else { 0.0 }),
        None => (f64::INFINITY, if p == 2 { f64::INFINITY } else { 0.0 }),
    };
    Ok(FitResult {
        temperature,
        temperature_sigma,
        lambda_fit,
        lambda_sigma,
        residual: current,
        converged: converged && temperature > 0.0,
        iterations,
    })
}
