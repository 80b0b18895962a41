//! Grid-based Bayesian inference for a scale parameter.

mod estimator;
mod grid;
mod infogain;

pub use estimator::{error_bar, estimate, mean_log_error, prior_uncertainty, ErrorBar};
pub use grid::{
    bayes_update, make_prior, HypothesisGrid, PosteriorGrid, PriorSpec, DEFAULT_GRID_POINTS,
    DEFAULT_UNIT_SCALE,
};
pub use infogain::{info_gain, info_gain_curve, optimal_time, InfoGainCurve, InfoGainSweep, TimeGrid};
