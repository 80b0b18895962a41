//! Tweezer physics: trap parameters, Lambert W, recaptured fraction and
//! outcome likelihoods.

mod lambert;
mod likelihood;
mod recapture;
mod trap;

pub use lambert::lambert_w0;
pub use likelihood::{
    multi_atom_likelihood, outcome_distribution, single_atom_likelihood, LikelihoodModel, Loading,
    DEFAULT_ATOM_CAP, MAX_TRUNCATED_MASS,
};
pub use recapture::{recapture_fraction, RecaptureQuery};
pub use trap::TrapConfig;

pub(crate) use likelihood::poisson_log_pmf;
pub(crate) use recapture::fraction;
