//! Synthetic release–recapture outcomes.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, StreamRng};
use crate::error::{Error, Result};
use crate::physics::{fraction, LikelihoodModel, TrapConfig};
use crate::protocols::OutcomeSource;

/// Ground truth for synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub true_temperature: f64,
    pub true_lambda: f64,
    pub trap: TrapConfig,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(true_temperature: f64, true_lambda: f64, trap: TrapConfig, seed: u64) -> Result<Self> {
        let cfg = Self { true_temperature, true_lambda, trap, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        if !(self.true_temperature > 0.0 && self.true_temperature.is_finite()) {
            return Err(Error::domain("true temperature must be positive"));
        }
        if !(self.true_lambda > 0.0 && self.true_lambda.is_finite()) {
            return Err(Error::domain("true mean loading must be positive"));
        }
        Ok(())
    }
}

/// Draws the initial atom number N0 ~ Poisson(λ).
pub fn sample_loading<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u32 {
    Poisson::new(lambda).expect("positive mean").sample(rng) as u32
}

/// One outcome at release time `t`: a Bernoulli survival for a single atom,
/// otherwise N0 ~ Poisson(λ) followed by Binomial(N0, f).
pub fn sample_outcome<R: Rng + ?Sized>(cfg: &SyntheticConfig, model: &LikelihoodModel, t: f64, rng: &mut R) -> u32 {
    let f = fraction(&cfg.trap, cfg.true_temperature, t);
    if model.is_multi_atom() {
        let loaded = sample_loading(cfg.true_lambda, rng);
        if loaded == 0 {
            return 0;
        }
        Binomial::new(loaded as u64, f).expect("probability in [0, 1]").sample(rng) as u32
    } else {
        rng.random_bool(f) as u32
    }
}

/// Outcome source backed by the generative sampler.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    cfg: SyntheticConfig,
    model: LikelihoodModel,
    rng: StreamRng,
}

impl SyntheticSource {
    pub fn new(cfg: SyntheticConfig, model: LikelihoodModel, stream: u64) -> Self {
        Self { rng: stream_rng(cfg.seed, stream), cfg, model }
    }

    pub fn from_rng(cfg: SyntheticConfig, model: LikelihoodModel, rng: StreamRng) -> Self {
        Self { cfg, model, rng }
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    pub fn into_rng(self) -> StreamRng {
        self.rng
    }
}

impl OutcomeSource for SyntheticSource {
    fn outcome(&mut self, time: f64) -> Result<i64> {
        Ok(sample_outcome(&self.cfg, &self.model, time, &mut self.rng) as i64)
    }
}
