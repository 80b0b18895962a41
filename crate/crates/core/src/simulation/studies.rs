//! Repeated synthetic experiments: protocol variability and convergence with shot count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{derive_seed, stream_rng, StreamRng};
use super::sampler::{sample_loading, sample_outcome, SyntheticConfig, SyntheticSource};
use super::stats::{bias_variability, variability};
use crate::error::{Error, Result};
use crate::inference::{estimate, make_prior, InfoGainSweep, PosteriorGrid, PriorSpec, TimeGrid};
use crate::physics::{LikelihoodModel, TrapConfig, DEFAULT_ATOM_CAP};
use crate::protocols::{least_squares_fit, AdaptiveSession, FitOptions, MeasurementRecord, Shot, TimePolicy};
use crate::units::seconds_from_micro;

const VARIABILITY_TAG: u64 = 0x7661_7269;
const CONVERGENCE_TAG: u64 = 0x636f_6e76;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    LeastSquares,
    Unoptimised,
    APriori,
    Adaptive,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::LeastSquares, Protocol::Unoptimised, Protocol::APriori, Protocol::Adaptive];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::LeastSquares => "least_squares",
            Protocol::Unoptimised => "unoptimised",
            Protocol::APriori => "a_priori",
            Protocol::Adaptive => "adaptive",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least_squares" | "least-squares" | "lsq" => Ok(Protocol::LeastSquares),
            "unoptimised" | "unoptimized" => Ok(Protocol::Unoptimised),
            "a_priori" | "a-priori" | "apriori" => Ok(Protocol::APriori),
            "adaptive" => Ok(Protocol::Adaptive),
            other => Err(Error::domain(format!("unknown protocol {other:?}"))),
        }
    }
}

/// Layout of one synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub synthetic: SyntheticConfig,
    pub prior: PriorSpec,
    /// Release times of the fixed-design protocols, seconds.
    pub benchmark_times: Vec<f64>,
    pub shots_per_time: usize,
    pub calibration_shots: usize,
    pub atom_cap: u32,
    /// Use the true λ instead of re-estimating it from each run's calibration.
    pub known_lambda: bool,
    pub time_grid: TimeGrid,
}

impl BenchmarkConfig {
    /// Deep trap at 40 µK, λ = 1.65, seven release times with 30 shots each and 60 calibration shots.
    pub fn deep(seed: u64) -> Self {
        Self {
            synthetic: SyntheticConfig { true_temperature: 40e-6, true_lambda: 1.65, trap: TrapConfig::deep(), seed },
            prior: PriorSpec::with_support(14.5e-6, 125e-6).expect("valid prior"),
            benchmark_times: [5.0, 10.0, 20.0, 30.0, 50.0, 70.0, 100.0].iter().map(|&t| seconds_from_micro(t)).collect(),
            shots_per_time: 30,
            calibration_shots: 60,
            atom_cap: DEFAULT_ATOM_CAP,
            known_lambda: false,
            time_grid: TimeGrid::default(),
        }
    }

    pub fn total_shots(&self) -> usize {
        self.benchmark_times.len() * self.shots_per_time
    }

    fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.prior.validate()?;
        if self.benchmark_times.is_empty() {
            return Err(Error::domain("benchmark needs at least one release time"));
        }
        if !self.known_lambda && self.calibration_shots == 0 {
            return Err(Error::domain("re-estimating λ needs calibration shots"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub protocol: Protocol,
    pub true_temperature: f64,
    pub estimates: Vec<f64>,
    pub variability: f64,
    pub bias_variability: f64,
}

impl StudyResult {
    pub fn from_estimates(protocol: Protocol, true_temperature: f64, estimates: Vec<f64>) -> Self {
        Self {
            protocol,
            true_temperature,
            variability: variability(&estimates),
            bias_variability: bias_variability(&estimates, true_temperature),
            estimates,
        }
    }
}

/// Shared per-study state: prior grid, cached fractions.
struct Bench<'a> {
    cfg: &'a BenchmarkConfig,
    prior: PosteriorGrid,
    sweep: InfoGainSweep,
}

impl<'a> Bench<'a> {
    fn new(cfg: &'a BenchmarkConfig) -> Result<Self> {
        cfg.validate()?;
        let prior = make_prior(&cfg.prior)?;
        let model = LikelihoodModel::multi_atom_at_least(cfg.synthetic.trap, cfg.synthetic.true_lambda, cfg.atom_cap)?;
        let sweep = InfoGainSweep::new(model, cfg.time_grid.clone(), prior.support());
        Ok(Self { cfg, prior, sweep })
    }

    /// Draws calibration outcomes and returns them with the working model.
    /// A set with no atoms at all is redrawn, as it carries no loading
    /// information; this only matters for very small sets.
    fn calibrate(&self, shots: usize, rng: &mut StreamRng) -> Result<(Vec<u32>, LikelihoodModel)> {
        let syn = &self.cfg.synthetic;
        let mut calibration: Vec<u32>;
        let mut attempts = 0;
        loop {
            calibration = (0..shots).map(|_| sample_loading(syn.true_lambda, rng)).collect();
            if self.cfg.known_lambda || calibration.iter().any(|&n| n > 0) {
                break;
            }
            attempts += 1;
            if attempts == 1000 {
                return Err(Error::Calibration("all calibration shots empty; λ = 0 is unusable".into()));
            }
        }
        let lambda = if self.cfg.known_lambda {
            syn.true_lambda
        } else {
            calibration.iter().sum::<u32>() as f64 / shots as f64
        };
        let model = LikelihoodModel::multi_atom_at_least(syn.trap, lambda, self.cfg.atom_cap)?;
        Ok((calibration, model))
    }

    fn fit_options(&self, model: &LikelihoodModel) -> FitOptions {
        FitOptions {
            initial_temperature: self.cfg.prior.geometric_mean(),
            fix_lambda: if self.cfg.known_lambda { model.mean_loading() } else { None },
            ..FitOptions::default()
        }
    }

    /// One run with `shots` measurements and `calibration` zero-release shots.
    fn run(&self, protocol: Protocol, shots: usize, calibration: usize, mut rng: StreamRng) -> Result<f64> {
        let (cal, model) = self.calibrate(calibration, &mut rng)?;
        let syn = &self.cfg.synthetic;
        match protocol {
            Protocol::LeastSquares | Protocol::Unoptimised => {
                let times = &self.cfg.benchmark_times;
                let mut record = MeasurementRecord { calibration: cal, ..MeasurementRecord::default() };
                // time-major blocks, the last block possibly short
                let per_time = shots.div_ceil(times.len());
                for j in 0..shots {
                    let t = times[(j / per_time).min(times.len() - 1)];
                    record.push(Shot { time: t, atoms: sample_outcome(syn, &model, t, &mut rng) });
                }
                if protocol == Protocol::LeastSquares {
                    Ok(least_squares_fit(&record, &syn.trap, &self.fit_options(&model))?.temperature)
                } else {
                    let mut post = self.prior.clone();
                    for s in &record.shots {
                        post = post.update(&model, s.time, s.atoms)?;
                    }
                    Ok(estimate(&post))
                }
            }
            Protocol::APriori => {
                let sweep = self.sweep.with_model(model)?;
                let t_s = sweep.optimal_time(&self.prior)?;
                let mut counts: Vec<(u32, u32)> = Vec::new();
                for _ in 0..shots {
                    let n = sample_outcome(syn, &model, t_s, &mut rng);
                    match counts.iter_mut().find(|c| c.0 == n) {
                        Some(c) => c.1 += 1,
                        None => counts.push((n, 1)),
                    }
                }
                Ok(estimate(&self.prior.update_counts(&model, t_s, &counts)?))
            }
            Protocol::Adaptive => {
                let sweep = self.sweep.with_model(model)?;
                let mut session = AdaptiveSession::from_sweep(self.cfg.prior, &sweep, TimePolicy::Adaptive)?;
                let mut source = SyntheticSource::from_rng(*syn, model, rng);
                session.run(shots, &mut source)?;
                Ok(session.estimate().estimate)
            }
        }
    }
}

/// Variability of `protocol` over `runs` seeded repetitions of the benchmark.
/// Run `r` draws from stream `r`, so every protocol sees the same calibration
/// and, for the fixed designs, the same shots.
pub fn variability_study(protocol: Protocol, cfg: &BenchmarkConfig, runs: usize) -> Result<StudyResult> {
    if runs < 2 {
        return Err(Error::domain("variability needs at least two runs"));
    }
    let bench = Bench::new(cfg)?;
    let seed = derive_seed(cfg.synthetic.seed, VARIABILITY_TAG);
    let estimates = (0..runs)
        .into_par_iter()
        .map(|r| bench.run(protocol, cfg.total_shots(), cfg.calibration_shots, stream_rng(seed, r as u64)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(StudyResult::from_estimates(protocol, cfg.synthetic.true_temperature, estimates))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Exponent a in variability ≈ k^{-a} / F.
    pub exponent: f64,
    pub f: f64,
    /// F of the 1/(kF) form (a fixed at 1) over the same points.
    pub f_unit: f64,
    /// Smallest k from which every backward fit keeps |a − 1| within tolerance.
    pub onset: Option<usize>,
    pub points_used: usize,
}

/// Tolerance on |a − 1| for the asymptotic regime.
pub const ONSET_TOLERANCE: f64 = 0.025;

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Fits ln v = −a ln k − ln F to the largest-k points, adding smaller k one
/// at a time until a first leaves 1 ± `tolerance`.
pub fn fit_power_law_onset(ks: &[usize], variabilities: &[f64], tolerance: f64) -> Result<PowerLawFit> {
    if ks.len() != variabilities.len() {
        return Err(Error::Fit("k grid and variabilities differ in length".into()));
    }
    if ks.len() < 3 {
        return Err(Error::Fit("power-law fit needs at least three points".into()));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) || variabilities.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("k grid must increase and variabilities be positive".into()));
    }
    let xs: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = variabilities.iter().map(|v| v.ln()).collect();
    let n = ks.len();
    let fit_tail = |m: usize| {
        let (slope, intercept) = line_fit(&xs[n - m..], &ys[n - m..]);
        (-slope, (-intercept).exp())
    };
    let mut accepted: Option<(usize, f64, f64)> = None;
    for m in 3..=n {
        let (a, f) = fit_tail(m);
        if (a - 1.0).abs() > tolerance {
            break;
        }
        accepted = Some((m, a, f));
    }
    let unit_tail = |m: usize| {
        let mean = (n - m..n).map(|i| -(xs[i] + ys[i])).sum::<f64>() / m as f64;
        mean.exp()
    };
    Ok(match accepted {
        Some((m, a, f)) => PowerLawFit { exponent: a, f, f_unit: unit_tail(m), onset: Some(ks[n - m]), points_used: m },
        None => {
            let (a, f) = fit_tail(3);
            PowerLawFit { exponent: a, f, f_unit: unit_tail(3), onset: None, points_used: 3 }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub protocol: Protocol,
    pub ks: Vec<usize>,
    pub variabilities: Vec<f64>,
    pub fit: PowerLawFit,
}

/// Default shot counts, all multiples of seven.
pub fn default_k_grid() -> Vec<usize> {
    vec![14, 28, 42, 70, 105, 140, 175, 210, 280, 350, 420, 525, 700, 1050, 1400]
}

/// Variability against shot count k; each run uses round(2k/7) calibration shots.
pub fn convergence_study(protocol: Protocol, cfg: &BenchmarkConfig, runs: usize, ks: &[usize]) -> Result<ConvergenceResult> {
    if runs < 2 {
        return Err(Error::domain("variability needs at least two runs"));
    }
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) || ks[0] == 0 {
        return Err(Error::domain("k grid must be positive and increasing"));
    }
    let bench = Bench::new(cfg)?;
    let seed = derive_seed(cfg.synthetic.seed, CONVERGENCE_TAG);
    let mut variabilities = Vec::with_capacity(ks.len());
    for (i, &k) in ks.iter().enumerate() {
        let calibration = ((2 * k) as f64 / 7.0).round().max(1.0) as usize;
        let estimates = (0..runs)
            .into_par_iter()
            .map(|r| bench.run(protocol, k, calibration, stream_rng(seed, (r * ks.len() + i) as u64)))
            .collect::<Result<Vec<f64>>>()?;
        variabilities.push(variability(&estimates));
    }
    let fit = fit_power_law_onset(ks, &variabilities, ONSET_TOLERANCE)?;
    Ok(ConvergenceResult { protocol, ks: ks.to_vec(), variabilities, fit })
}

/// Asymptotic variability reduction 1 − F_reference / F_improved, with both
/// F taken from the 1/(kF) form so that noise in the fitted exponents does
/// not leak into the ratio.
pub fn variability_reduction(reference: &PowerLawFit, improved: &PowerLawFit) -> f64 {
    1.0 - reference.f_unit / improved.f_unit
}
