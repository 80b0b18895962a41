//! Outcome likelihoods p(n | θ, t) for single- and multi-atom loading.

use serde::{Deserialize, Serialize};

use super::recapture::fraction;
use super::trap::TrapConfig;
use crate::error::{Error, Result};

/// Loading probability mass that outcome enumeration may drop beyond the cap.
pub const MAX_TRUNCATED_MASS: f64 = 2e-3;

/// Default cap on the initial atom number.
pub const DEFAULT_ATOM_CAP: u32 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Loading {
    /// Exactly one atom per shot; outcome is recaptured (1) or lost (0).
    SingleAtom,
    /// Poissonian loading with mean `mean_loading`; outcomes are enumerated up to `atom_cap`.
    MultiAtom { mean_loading: f64, atom_cap: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodModel {
    trap: TrapConfig,
    loading: Loading,
}

impl LikelihoodModel {
    pub fn single_atom(trap: TrapConfig) -> Result<Self> {
        trap.validate()?;
        Ok(Self { trap, loading: Loading::SingleAtom })
    }

    /// Multi-atom model; rejects caps that drop more than [`MAX_TRUNCATED_MASS`].
    pub fn multi_atom(trap: TrapConfig, mean_loading: f64, atom_cap: u32) -> Result<Self> {
        trap.validate()?;
        if !(mean_loading.is_finite() && mean_loading > 0.0) {
            return Err(Error::domain(format!("mean loading must be positive, got {mean_loading}")));
        }
        if atom_cap < 1 {
            return Err(Error::domain("atom cap must be at least 1"));
        }
        let tail = poisson_tail_above(mean_loading, atom_cap);
        if tail >= MAX_TRUNCATED_MASS {
            return Err(Error::domain(format!(
                "atom cap {atom_cap} drops loading mass {tail:.2e} at mean {mean_loading}"
            )));
        }
        Ok(Self { trap, loading: Loading::MultiAtom { mean_loading, atom_cap } })
    }

    /// Multi-atom model with the smallest cap `>= atom_cap` satisfying the truncation bound.
    pub fn multi_atom_at_least(trap: TrapConfig, mean_loading: f64, atom_cap: u32) -> Result<Self> {
        if !(mean_loading.is_finite() && mean_loading > 0.0) {
            return Err(Error::domain(format!("mean loading must be positive, got {mean_loading}")));
        }
        let mut cap = atom_cap.max(1);
        while poisson_tail_above(mean_loading, cap) >= MAX_TRUNCATED_MASS {
            cap += 1;
        }
        Self::multi_atom(trap, mean_loading, cap)
    }

    pub fn trap(&self) -> &TrapConfig {
        &self.trap
    }

    pub fn loading(&self) -> Loading {
        self.loading
    }

    pub fn is_multi_atom(&self) -> bool {
        matches!(self.loading, Loading::MultiAtom { .. })
    }

    pub fn mean_loading(&self) -> Option<f64> {
        match self.loading {
            Loading::SingleAtom => None,
            Loading::MultiAtom { mean_loading, .. } => Some(mean_loading),
        }
    }

    /// Largest enumerated outcome (1 for single-atom).
    pub fn max_outcome(&self) -> u32 {
        match self.loading {
            Loading::SingleAtom => 1,
            Loading::MultiAtom { atom_cap, .. } => atom_cap,
        }
    }

    /// Same model with a different trap, keeping the loading.
    pub fn with_trap(&self, trap: TrapConfig) -> Self {
        Self { trap, loading: self.loading }
    }

    /// Checks that `n` is a possible outcome (any `n >= 0` for multi-atom).
    pub fn check_outcome(&self, n: i64) -> Result<u32> {
        let ok = match self.loading {
            Loading::SingleAtom => n == 0 || n == 1,
            Loading::MultiAtom { .. } => n >= 0 && n <= u32::MAX as i64,
        };
        if ok {
            Ok(n as u32)
        } else {
            let reason = match self.loading {
                Loading::SingleAtom => "single-atom outcomes are 0 or 1",
                Loading::MultiAtom { .. } => "atom counts are nonnegative",
            };
            Err(Error::InvalidOutcome { outcome: n, reason: reason.into() })
        }
    }

    /// p(n | θ, t).
    pub fn probability(&self, theta: f64, t: f64, n: u32) -> f64 {
        let q = fraction(&self.trap, theta, t);
        match self.loading {
            Loading::SingleAtom => bernoulli(q, n),
            Loading::MultiAtom { mean_loading, .. } => poisson_pmf(mean_loading * q, n),
        }
    }

    /// ln p(n | θ, t), possibly `-inf`.
    pub fn log_probability(&self, theta: f64, t: f64, n: u32) -> f64 {
        let q = fraction(&self.trap, theta, t);
        self.log_probability_from_fraction(q, n)
    }

    pub(crate) fn log_probability_from_fraction(&self, q: f64, n: u32) -> f64 {
        match self.loading {
            Loading::SingleAtom => bernoulli(q, n).ln(),
            Loading::MultiAtom { mean_loading, .. } => poisson_log_pmf(mean_loading * q, n),
        }
    }

    /// Writes p(n | fraction) for n = 0..=max_outcome into `out`.
    pub(crate) fn outcome_probabilities_from_fraction(&self, q: f64, out: &mut [f64]) {
        match self.loading {
            Loading::SingleAtom => {
                out[0] = 1.0 - q;
                out[1] = q;
            }
            Loading::MultiAtom { mean_loading, atom_cap } => {
                let mu = mean_loading * q;
                let mut p = (-mu).exp();
                out[0] = p;
                for n in 1..=atom_cap as usize {
                    p *= mu / n as f64;
                    out[n] = p;
                }
            }
        }
    }
}

pub fn single_atom_likelihood(trap: &TrapConfig, theta: f64, t: f64, n: i64) -> Result<f64> {
    let model = LikelihoodModel::single_atom(*trap)?;
    let n = model.check_outcome(n)?;
    Ok(model.probability(theta, t, n))
}

pub fn multi_atom_likelihood(model: &LikelihoodModel, theta: f64, t: f64, n: i64) -> Result<f64> {
    if !model.is_multi_atom() {
        return Err(Error::domain("multi_atom_likelihood needs a multi-atom model"));
    }
    let n = model.check_outcome(n)?;
    Ok(model.probability(theta, t, n))
}

/// Likelihood at n = 0..=max_outcome. Not renormalised after truncation.
pub fn outcome_distribution(model: &LikelihoodModel, theta: f64, t: f64) -> Vec<f64> {
    (0..=model.max_outcome()).map(|n| model.probability(theta, t, n)).collect()
}

fn bernoulli(q: f64, n: u32) -> f64 {
    match n {
        1 => q,
        0 => 1.0 - q,
        _ => 0.0,
    }
}

pub(crate) fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub(crate) fn poisson_log_pmf(mu: f64, n: u32) -> f64 {
    if mu == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mu.ln() - mu - ln_factorial(n)
}

pub(crate) fn poisson_pmf(mu: f64, n: u32) -> f64 {
    poisson_log_pmf(mu, n).exp()
}

/// P(N > cap) for N ~ Poisson(mean).
pub(crate) fn poisson_tail_above(mean: f64, cap: u32) -> f64 {
    let mut p = (-mean).exp();
    let mut head = p;
    for k in 1..=cap {
        p *= mean / k as f64;
        head += p;
    }
    (1.0 - head).max(0.0)
}
