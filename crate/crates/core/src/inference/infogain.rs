//! Expected single-shot information gain and release-time optimisation.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{HypothesisGrid, PosteriorGrid};
use crate::error::{Error, Result};
use crate::physics::{fraction, LikelihoodModel};
use crate::units::{micro_from_seconds, seconds_from_micro};

/// Candidate release times, all integer multiples of a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Times `start_us, start_us + step_us, ..., <= stop_us` in seconds.
    pub fn uniform_micros(start_us: f64, stop_us: f64, step_us: f64) -> Result<Self> {
        if !(step_us > 0.0 && start_us >= 0.0 && stop_us >= start_us && stop_us.is_finite()) {
            return Err(Error::domain(format!("bad time grid {start_us}:{stop_us}:{step_us}")));
        }
        let count = ((stop_us - start_us) / step_us + 1e-9).floor() as usize + 1;
        let times = (0..count).map(|k| seconds_from_micro(start_us + step_us * k as f64)).collect();
        Ok(Self { times })
    }

    pub fn from_seconds(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::domain("time grid is empty"));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::domain("release times must be finite and nonnegative"));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn contains(&self, t: f64) -> bool {
        self.position(t).is_some()
    }

    pub fn position(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| x == t)
    }
}

impl Default for TimeGrid {
    /// 2, 4, ..., 200 µs.
    fn default() -> Self {
        Self::uniform_micros(2.0, 200.0, 2.0).expect("valid default grid")
    }
}

/// 𝒦(t) sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoGainCurve {
    pub times: Vec<f64>,
    pub gains: Vec<f64>,
}

impl InfoGainCurve {
    /// Time of the largest gain, ties resolved toward the earlier time.
    pub fn argmax(&self) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (&t, &k) in self.times.iter().zip(&self.gains) {
            match best {
                Some((_, bk)) if k <= bk => {}
                _ => best = Some((t, k)),
            }
        }
        best.map(|(t, _)| t)
    }

    pub fn times_micros(&self) -> Vec<f64> {
        self.times.iter().map(|&t| micro_from_seconds(t)).collect()
    }
}

/// 𝒦(t) = Σ_n p(n|t) ln²(θ̃(n,t)/θ̃_p), outcomes n = 0..=max_outcome.
pub fn info_gain(post: &PosteriorGrid, model: &LikelihoodModel, t: f64) -> f64 {
    let q: Vec<f64> = post.thetas().iter().map(|&theta| fraction(model.trap(), theta, t)).collect();
    gain_from_fractions(post, model, &q)
}

fn gain_from_fractions(post: &PosteriorGrid, model: &LikelihoodModel, fractions: &[f64]) -> f64 {
    let outcomes = model.max_outcome() as usize + 1;
    let weights = post.support().weights();
    let logs = post.support().log_thetas();
    let mut mass = vec![0.0; outcomes];
    let mut log_moment = vec![0.0; outcomes];
    let mut probs = vec![0.0; outcomes];
    let mut total = 0.0;
    let mut total_log = 0.0;
    for (i, (&p, &q)) in post.densities().iter().zip(fractions).enumerate() {
        let wp = weights[i] * p;
        total += wp;
        total_log += wp * logs[i];
        model.outcome_probabilities_from_fraction(q, &mut probs);
        for n in 0..outcomes {
            let contribution = wp * probs[n];
            mass[n] += contribution;
            log_moment[n] += contribution * logs[i];
        }
    }
    let prior_log = total_log / total;
    let mut gain = 0.0;
    for n in 0..outcomes {
        if mass[n] > 0.0 {
            let shift = log_moment[n] / mass[n] - prior_log;
            gain += (mass[n] / total) * shift * shift;
        }
    }
    gain
}

/// Recaptured fractions cached for every (time, hypothesis) pair of one
/// support grid, so repeated sweeps only redo the cheap outcome sums.
#[derive(Debug, Clone)]
pub struct InfoGainSweep {
    model: LikelihoodModel,
    grid: TimeGrid,
    support_nodes: Arc<Vec<f64>>,
    fractions: Arc<Vec<Vec<f64>>>,
}

impl InfoGainSweep {
    pub fn new(model: LikelihoodModel, grid: TimeGrid, support: &HypothesisGrid) -> Self {
        let fractions = grid
            .times()
            .par_iter()
            .map(|&t| support.thetas().iter().map(|&theta| fraction(model.trap(), theta, t)).collect())
            .collect();
        Self { model, grid, support_nodes: Arc::new(support.thetas().to_vec()), fractions: Arc::new(fractions) }
    }

    /// Reuses the cached fractions under a different loading model on the same trap.
    pub fn with_model(&self, model: LikelihoodModel) -> Result<Self> {
        if model.trap() != self.model.trap() {
            return Err(Error::domain("cached sweep belongs to a different trap"));
        }
        Ok(Self { model, ..self.clone() })
    }

    pub fn model(&self) -> &LikelihoodModel {
        &self.model
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn check_support(&self, post: &PosteriorGrid) -> Result<()> {
        if post.thetas() != self.support_nodes.as_slice() {
            return Err(Error::domain("posterior support differs from the cached sweep"));
        }
        Ok(())
    }

    pub fn curve(&self, post: &PosteriorGrid) -> Result<InfoGainCurve> {
        self.check_support(post)?;
        let gains = self
            .fractions
            .par_iter()
            .map(|q| gain_from_fractions(post, &self.model, q))
            .collect();
        Ok(InfoGainCurve { times: self.grid.times().to_vec(), gains })
    }

    pub fn optimal_time(&self, post: &PosteriorGrid) -> Result<f64> {
        self.curve(post)?.argmax().ok_or_else(|| Error::domain("time grid is empty"))
    }
}

pub fn info_gain_curve(post: &PosteriorGrid, model: &LikelihoodModel, times: &[f64]) -> InfoGainCurve {
    let gains = times.par_iter().map(|&t| info_gain(post, model, t)).collect();
    InfoGainCurve { times: times.to_vec(), gains }
}

/// Grid time maximising 𝒦(t) under `post`; ties go to the smaller time.
pub fn optimal_time(post: &PosteriorGrid, model: &LikelihoodModel, times: &[f64]) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::domain("time grid is empty"));
    }
    info_gain_curve(post, model, times)
        .argmax()
        .ok_or_else(|| Error::domain("time grid is empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::estimator::{error_bar, estimate, mean_log_error, prior_uncertainty};
    use crate::inference::grid::{make_prior, PriorSpec};
    use crate::physics::TrapConfig;

    fn prior(a_uk: f64, b_uk: f64) -> PosteriorGrid {
        make_prior(&PriorSpec::with_support(a_uk * 1e-6, b_uk * 1e-6).unwrap()).unwrap()
    }

    fn ts_micros(post: &PosteriorGrid, model: &LikelihoodModel) -> f64 {
        micro_from_seconds(optimal_time(post, model, TimeGrid::default().times()).unwrap()).round()
    }

    #[test]
    fn default_grid() {
        let grid = TimeGrid::default();
        assert_eq!(grid.times().len(), 100);
        assert_eq!(grid.times()[0], 2e-6);
        assert_eq!(grid.times()[99], 200e-6);
        assert!(grid.contains(seconds_from_micro(22.0)));
        assert!(!grid.contains(seconds_from_micro(23.0)));
        assert!(TimeGrid::from_seconds(vec![]).is_err());
    }

    #[test]
    fn zero_time_carries_no_information() {
        let post = prior(14.5, 125.0);
        let model = LikelihoodModel::multi_atom(TrapConfig::deep(), 1.65, 7).unwrap();
        assert!(info_gain(&post, &model, 0.0) < 1e-20);
    }

    #[test]
    fn optimal_times_match_reported_values() {
        let deep = TrapConfig::deep();
        let single = LikelihoodModel::single_atom(deep).unwrap();
        assert_eq!(ts_micros(&prior(14.5, 125.0), &single), 14.0);
        let multi = LikelihoodModel::multi_atom(deep, 1.65, 7).unwrap();
        assert_eq!(ts_micros(&prior(14.5, 125.0), &multi), 22.0);
        let shallow = LikelihoodModel::multi_atom(TrapConfig::shallow(), 1.88, 7).unwrap();
        assert_eq!(ts_micros(&prior(5.5, 30.0), &shallow), 42.0);
        let wide = ts_micros(&prior(1.45, 125.0), &multi);
        assert!((wide - 60.0).abs() <= 2.0, "{wide}");
    }

    #[test]
    fn sweep_matches_direct_evaluation_bitwise() {
        let post = prior(14.5, 125.0);
        let model = LikelihoodModel::multi_atom(TrapConfig::deep(), 1.65, 7).unwrap();
        let grid = TimeGrid::default();
        let sweep = InfoGainSweep::new(model, grid.clone(), post.support());
        let cached = sweep.curve(&post).unwrap();
        let direct = info_gain_curve(&post, &model, grid.times());
        assert_eq!(cached, direct);
        assert!(cached.gains.iter().all(|&k| k >= 0.0));
        let other = prior(5.0, 30.0);
        assert!(sweep.curve(&other).is_err());
    }

    #[test]
    fn empty_time_grid_is_error() {
        let post = prior(14.5, 125.0);
        let model = LikelihoodModel::single_atom(TrapConfig::deep()).unwrap();
        assert!(optimal_time(&post, &model, &[]).is_err());
    }

    #[test]
    fn ties_break_toward_shorter_time() {
        let curve = InfoGainCurve { times: vec![1.0, 2.0, 3.0], gains: vec![0.1, 0.5, 0.5] };
        assert_eq!(curve.argmax(), Some(2.0));
    }

    /// Σ_n p(n|t) ε̄(n,t) = ε̄_p − 𝒦(t) when every outcome is enumerated.
    #[test]
    fn single_shot_error_identity() {
        let trap = TrapConfig::deep();
        let post = prior(14.5, 125.0);
        let models = [
            LikelihoodModel::single_atom(trap).unwrap(),
            LikelihoodModel::multi_atom(trap, 1.65, 25).unwrap(),
        ];
        let eps_p = prior_uncertainty(&post);
        for model in &models {
            for t_us in [5.0, 14.0, 22.0, 60.0, 150.0] {
                let t = t_us * 1e-6;
                let k = info_gain(&post, model, t);
                let mut averaged = 0.0;
                for n in 0..=model.max_outcome() {
                    let weights = post.support().weights();
                    let pn: f64 = post
                        .densities()
                        .iter()
                        .zip(post.thetas())
                        .zip(weights)
                        .map(|((p, &th), w)| w * p * model.probability(th, t, n))
                        .sum();
                    if pn > 0.0 {
                        let updated = post.update(model, t, n).unwrap();
                        averaged += pn * mean_log_error(&updated, estimate(&updated));
                    }
                }
                assert!((averaged - (eps_p - k)).abs() < 1e-6, "t={t_us}: {averaged} vs {}", eps_p - k);
            }
        }
        let _ = error_bar(&post);
    }
}
