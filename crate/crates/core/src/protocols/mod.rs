//! Measurement protocols: least squares, unoptimised, a-priori optimised and
//! fully adaptive Bayesian estimation, record replay and the joint posterior.

mod joint;
mod lsq;
mod record;
mod replay;
mod sequential;
mod session;

pub use joint::{two_parameter_posterior, JointPosterior, LambdaRange};
pub use lsq::{least_squares_fit, FitOptions, FitResult};
pub use record::{MeasurementRecord, RecordMetadata, Shot, TimeGroup};
pub use replay::{replay_reordered, shots_to_settle, Replay, ReplayOrder};
pub use sequential::{process_shots, run_unoptimised, BayesRun, TraceEntry};
pub use session::{
    adaptive_protocol, apriori_protocol, AdaptiveSession, OutcomeSource, ProtocolAbort, SessionSnapshot,
    SessionStep, TimePolicy,
};
