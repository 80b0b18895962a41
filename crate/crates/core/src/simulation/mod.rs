//! Synthetic outcomes, trajectory Monte-Carlo and repeated-experiment studies.

mod rng;
mod sampler;
mod stats;
mod studies;
mod trajectory;

pub use rng::{derive_seed, stream_rng, StreamRng};
pub use sampler::{sample_loading, sample_outcome, SyntheticConfig, SyntheticSource};
pub use stats::{bias_variability, bootstrap_order_confidence, variability};
pub use studies::{
    convergence_study, default_k_grid, fit_power_law_onset, variability_reduction, variability_study,
    BenchmarkConfig, ConvergenceResult, PowerLawFit, Protocol, StudyResult, ONSET_TOLERANCE,
};
pub use trajectory::{
    mc_recapture_fraction, validity_scan, GravityAxis, InitialPositions, McFraction, TrajectoryConfig, ValidityCell,
    VALIDITY_SLACK,
};
