//! Optimal logarithmic estimator and its mean logarithmic error.

use serde::{Deserialize, Serialize};

use super::grid::PosteriorGrid;

/// θ̃ = θ_u exp(∫ p(θ) ln(θ/θ_u) dθ).
pub fn estimate(post: &PosteriorGrid) -> f64 {
    let unit = post.unit_scale();
    let log_unit = unit.ln();
    let logs = post.support().log_thetas();
    unit * post.expectation(|i| logs[i] - log_unit).exp()
}

/// ∫ p(θ) ln²(estimate/θ) dθ.
pub fn mean_log_error(post: &PosteriorGrid, estimate: f64) -> f64 {
    let log_est = estimate.ln();
    let logs = post.support().log_thetas();
    post.expectation(|i| {
        let d = log_est - logs[i];
        d * d
    })
}

/// Estimate with its error bar Δ = θ̃ √ε̄.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBar {
    pub estimate: f64,
    pub delta: f64,
}

impl ErrorBar {
    /// Relative uncertainty Δ/θ̃, i.e. √ε̄.
    pub fn relative(&self) -> f64 {
        self.delta / self.estimate
    }
}

impl std::fmt::Display for ErrorBar {
    /// Formats as `θ̃ ± Δ` in microkelvin.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3} µK", self.estimate * 1e6, self.delta * 1e6)
    }
}

pub fn error_bar(post: &PosteriorGrid) -> ErrorBar {
    let est = estimate(post);
    ErrorBar { estimate: est, delta: est * mean_log_error(post, est).sqrt() }
}

/// ε̄_p: mean logarithmic error of a grid at its own optimal estimate.
pub fn prior_uncertainty(post: &PosteriorGrid) -> f64 {
    mean_log_error(post, estimate(post))
}
