//! Log-spaced hypothesis grids and posterior densities over temperature.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::{fraction, LikelihoodModel};

pub const DEFAULT_GRID_POINTS: usize = 1000;

/// θ_u used when reporting estimates: 1 µK.
pub const DEFAULT_UNIT_SCALE: f64 = 1e-6;

/// Support and resolution of the temperature prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub theta_min: f64,
    pub theta_max: f64,
    pub grid_points: usize,
}

impl PriorSpec {
    pub fn new(theta_min: f64, theta_max: f64, grid_points: usize) -> Result<Self> {
        let spec = Self { theta_min, theta_max, grid_points };
        spec.validate()?;
        Ok(spec)
    }

    /// `[theta_min, theta_max]` with the default 1000-point grid.
    pub fn with_support(theta_min: f64, theta_max: f64) -> Result<Self> {
        Self::new(theta_min, theta_max, DEFAULT_GRID_POINTS)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min.is_finite() && self.theta_min > 0.0) {
            return Err(Error::domain(format!("theta_min must be positive, got {}", self.theta_min)));
        }
        if !(self.theta_max.is_finite() && self.theta_max > self.theta_min) {
            return Err(Error::domain(format!(
                "theta_max ({}) must exceed theta_min ({})",
                self.theta_max, self.theta_min
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::domain("grid_points must be at least 2"));
        }
        Ok(())
    }

    /// Geometric midpoint √(θ_min θ_max), the prior's own estimate.
    pub fn geometric_mean(&self) -> f64 {
        (self.theta_min * self.theta_max).sqrt()
    }
}

/// Hypothesis nodes and quadrature weights for ∫ · dθ.
///
/// Nodes are uniform in u = ln θ. Weights are composite Simpson in u (with a
/// 3/8 panel when the interval count is odd) multiplied by θ, so integrands
/// that are cubic in ln θ integrate exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrid {
    thetas: Vec<f64>,
    log_thetas: Vec<f64>,
    weights: Vec<f64>,
}

impl HypothesisGrid {
    pub fn log_spaced(theta_min: f64, theta_max: f64, points: usize) -> Result<Self> {
        PriorSpec::new(theta_min, theta_max, points)?;
        let (a, b) = (theta_min.ln(), theta_max.ln());
        let h = (b - a) / (points - 1) as f64;
        let log_thetas: Vec<f64> = (0..points)
            .map(|i| if i + 1 == points { b } else { a + h * i as f64 })
            .collect();
        let mut thetas: Vec<f64> = log_thetas.iter().map(|u| u.exp()).collect();
        thetas[0] = theta_min;
        thetas[points - 1] = theta_max;
        let weights = simpson_weights(points, h)
            .into_iter()
            .zip(&thetas)
            .map(|(w, theta)| w * theta)
            .collect();
        Ok(Self { thetas, log_thetas, weights })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn log_thetas(&self) -> &[f64] {
        &self.log_thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn theta_min(&self) -> f64 {
        self.thetas[0]
    }

    pub fn theta_max(&self) -> f64 {
        self.thetas[self.thetas.len() - 1]
    }

    /// ∫ values(θ) dθ.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Weights in u for `points` equally spaced nodes with spacing `h`.
pub(crate) fn simpson_weights(points: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; points];
    let intervals = points - 1;
    if intervals == 1 {
        w[0] = h / 2.0;
        w[1] = h / 2.0;
        return w;
    }
    let (simpson_intervals, tail) = if intervals.is_multiple_of(2) { (intervals, 0) } else { (intervals - 3, 3) };
    for panel in 0..simpson_intervals / 2 {
        let i = 2 * panel;
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if tail == 3 {
        let i = simpson_intervals;
        w[i] += 3.0 * h / 8.0;
        w[i + 1] += 9.0 * h / 8.0;
        w[i + 2] += 9.0 * h / 8.0;
        w[i + 3] += 3.0 * h / 8.0;
    }
    w
}

/// Normalised probability density over temperature hypotheses.
///
/// Immutable: every update returns a new grid sharing the same support.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    support: Arc<HypothesisGrid>,
    log_density: Vec<f64>,
    density: Vec<f64>,
    unit_scale: f64,
}

/// Jeffreys prior `[θ ln(θ_max/θ_min)]⁻¹` on a log-spaced grid.
pub fn make_prior(spec: &PriorSpec) -> Result<PosteriorGrid> {
    spec.validate()?;
    let support = Arc::new(HypothesisGrid::log_spaced(spec.theta_min, spec.theta_max, spec.grid_points)?);
    let log_range = (spec.theta_max / spec.theta_min).ln();
    let density: Vec<f64> = support.thetas().iter().map(|t| 1.0 / (t * log_range)).collect();
    let log_density = density.iter().map(|d| d.ln()).collect();
    Ok(PosteriorGrid { support, log_density, density, unit_scale: DEFAULT_UNIT_SCALE })
}

impl PosteriorGrid {
    /// Builds a normalised grid from unnormalised log-density values.
    pub fn from_log_density(support: Arc<HypothesisGrid>, log_density: Vec<f64>) -> Result<Self> {
        if log_density.len() != support.len() {
            return Err(Error::domain("log-density length does not match the grid"));
        }
        normalise(support, log_density, DEFAULT_UNIT_SCALE)
    }

    pub fn support(&self) -> &Arc<HypothesisGrid> {
        &self.support
    }

    pub fn thetas(&self) -> &[f64] {
        self.support.thetas()
    }

    /// Probability density per kelvin at each node.
    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn log_densities(&self) -> &[f64] {
        &self.log_density
    }

    pub fn unit_scale(&self) -> f64 {
        self.unit_scale
    }

    pub fn with_unit_scale(mut self, unit_scale: f64) -> Result<Self> {
        if !(unit_scale.is_finite() && unit_scale > 0.0) {
            return Err(Error::domain("unit scale must be positive"));
        }
        self.unit_scale = unit_scale;
        Ok(self)
    }

    pub fn integral(&self) -> f64 {
        self.support.integrate(&self.density)
    }

    /// ∫ p(θ) h(θ) dθ / ∫ p(θ) dθ.
    pub(crate) fn expectation(&self, h: impl Fn(usize) -> f64) -> f64 {
        let w = self.support.weights();
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, p) in self.density.iter().enumerate() {
            let wp = w[i] * p;
            num += wp * h(i);
            den += wp;
        }
        num / den
    }

    /// Posterior after observing `n` atoms at release time `t`.
    pub fn update(&self, model: &LikelihoodModel, t: f64, n: u32) -> Result<Self> {
        self.update_counts(model, t, &[(n, 1)])
    }

    /// Posterior after several outcomes at the same release time, given as `(n, count)` pairs.
    pub fn update_counts(&self, model: &LikelihoodModel, t: f64, counts: &[(u32, u32)]) -> Result<Self> {
        if t == 0.0 {
            // every hypothesis predicts the same outcome law at zero release
            let possible = counts
                .iter()
                .all(|&(n, c)| c == 0 || model.log_probability_from_fraction(1.0, n).is_finite());
            return if possible { Ok(self.clone()) } else { Err(Error::DegeneratePosterior) };
        }
        let thetas = self.support.thetas();
        let log_density = self
            .log_density
            .iter()
            .zip(thetas)
            .map(|(lp, &theta)| {
                let q = fraction(model.trap(), theta, t);
                counts.iter().fold(*lp, |acc, &(n, c)| {
                    if c == 0 {
                        acc
                    } else {
                        acc + c as f64 * model.log_probability_from_fraction(q, n)
                    }
                })
            })
            .collect();
        normalise(self.support.clone(), log_density, self.unit_scale)
    }
}

fn normalise(support: Arc<HypothesisGrid>, mut log_density: Vec<f64>, unit_scale: f64) -> Result<PosteriorGrid> {
    let peak = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let mut density: Vec<f64> = log_density.iter().map(|lp| (lp - peak).exp()).collect();
    let z = support.integrate(&density);
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::DegeneratePosterior);
    }
    let log_z = z.ln();
    for (d, lp) in density.iter_mut().zip(log_density.iter_mut()) {
        *d /= z;
        *lp -= peak + log_z;
    }
    Ok(PosteriorGrid { support, log_density, density, unit_scale })
}

/// Functional form of [`PosteriorGrid::update`].
pub fn bayes_update(post: &PosteriorGrid, model: &LikelihoodModel, t: f64, n: i64) -> Result<PosteriorGrid> {
    let n = model.check_outcome(n)?;
    post.update(model, t, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{single_atom_likelihood, TrapConfig};

    fn deep_prior() -> PosteriorGrid {
        make_prior(&PriorSpec::with_support(14.5e-6, 125e-6).unwrap()).unwrap()
    }

    #[test]
    fn prior_is_normalised_jeffreys() {
        let prior = deep_prior();
        assert!((prior.integral() - 1.0).abs() < 1e-9);
        let log_range = (125.0f64 / 14.5).ln();
        let theta = 42.57e-6;
        assert!(((1.0 / (theta * log_range)) * theta - 1.0 / log_range).abs() < 1e-12);
        let c = prior.densities()[0] * prior.thetas()[0];
        for (d, t) in prior.densities().iter().zip(prior.thetas()) {
            assert!((d * t - c).abs() <= 1e-12 * c);
        }
    }

    #[test]
    fn degenerate_support_rejected() {
        assert!(PriorSpec::new(1e-6, 1e-6, 10).is_err());
        assert!(PriorSpec::new(2e-6, 1e-6, 10).is_err());
        assert!(PriorSpec::new(1e-6, 2e-6, 1).is_err());
        assert!(PriorSpec::new(-1e-6, 2e-6, 10).is_err());
    }

    #[test]
    fn simpson_weights_are_exact_for_cubics() {
        for points in [2usize, 3, 4, 5, 6, 11, 1000, 1001] {
            let h = 1.0 / (points - 1) as f64;
            let w = simpson_weights(points, h);
            assert!(w.iter().all(|&x| x > 0.0));
            let integral = |f: &dyn Fn(f64) -> f64| -> f64 { w.iter().enumerate().map(|(i, wi)| wi * f(i as f64 * h)).sum() };
            assert!((integral(&|_| 1.0) - 1.0).abs() < 1e-13);
            assert!((integral(&|x| x) - 0.5).abs() < 1e-13);
            if points >= 3 {
                assert!((integral(&|x| x * x) - 1.0 / 3.0).abs() < 1e-13, "{points}");
                assert!((integral(&|x| x * x * x) - 0.25).abs() < 1e-13, "{points}");
            }
        }
    }

    #[test]
    fn zero_time_update_leaves_posterior() {
        let prior = deep_prior();
        let model = LikelihoodModel::multi_atom(TrapConfig::deep(), 1.65, 7).unwrap();
        for n in [0, 1, 3, 9] {
            let post = bayes_update(&prior, &model, 0.0, n).unwrap();
            for (a, b) in post.densities().iter().zip(prior.densities()) {
                assert!((a - b).abs() <= 1e-12 * b);
            }
        }
    }

    #[test]
    fn single_shot_matches_fine_grid_oracle() {
        let trap = TrapConfig::deep();
        let prior = deep_prior();
        let model = LikelihoodModel::single_atom(trap).unwrap();
        let t = 22e-6;
        let post = bayes_update(&prior, &model, t, 1).unwrap();

        // Z by trapezoid on a 10x finer log grid, independent of the Simpson weights.
        let (a, b) = (14.5e-6f64, 125e-6f64);
        let fine = 10 * 1000;
        let log_range = (b / a).ln();
        let h = log_range / (fine - 1) as f64;
        let mut z = 0.0;
        for i in 0..fine {
            let theta = a * (h * i as f64).exp();
            let integrand = single_atom_likelihood(&trap, theta, t, 1).unwrap() / log_range;
            let wt = if i == 0 || i == fine - 1 { 0.5 } else { 1.0 };
            z += wt * h * integrand;
        }
        for (i, theta) in post.thetas().iter().enumerate().step_by(37) {
            let expected = prior.densities()[i] * single_atom_likelihood(&trap, *theta, t, 1).unwrap() / z;
            let got = post.densities()[i];
            assert!((got - expected).abs() <= 1e-6 * expected, "i={i}: {got} vs {expected}");
        }
    }

    #[test]
    fn updates_commute() {
        let prior = deep_prior();
        let model = LikelihoodModel::multi_atom(TrapConfig::deep(), 1.65, 7).unwrap();
        let ab = prior.update(&model, 22e-6, 2).unwrap().update(&model, 60e-6, 0).unwrap();
        let ba = prior.update(&model, 60e-6, 0).unwrap().update(&model, 22e-6, 2).unwrap();
        for (x, y) in ab.densities().iter().zip(ba.densities()) {
            assert!((x - y).abs() <= 1e-10 * x.max(1e-300));
        }
        assert!((ab.integral() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn impossible_outcome_is_degenerate() {
        let prior = deep_prior();
        let single = LikelihoodModel::single_atom(TrapConfig::deep()).unwrap();
        // at t = 0 every hypothesis recaptures, so losing the atom is impossible
        assert!(matches!(bayes_update(&prior, &single, 0.0, 0), Err(Error::DegeneratePosterior)));
        assert!(bayes_update(&prior, &single, 10e-6, 2).is_err());
    }

    #[test]
    fn batch_counts_match_sequential() {
        let prior = deep_prior();
        let model = LikelihoodModel::multi_atom(TrapConfig::deep(), 1.65, 7).unwrap();
        let seq = [1u32, 0, 2, 1, 1]
            .iter()
            .try_fold(prior.clone(), |p, &n| p.update(&model, 22e-6, n))
            .unwrap();
        let batch = prior.update_counts(&model, 22e-6, &[(0, 1), (1, 3), (2, 1)]).unwrap();
        for (x, y) in seq.densities().iter().zip(batch.densities()) {
            assert!((x - y).abs() <= 1e-10 * x);
        }
    }
}
