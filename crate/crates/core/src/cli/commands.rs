use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::Serialize;

use super::args::{AxisArg, StudyKind};
use super::config::Settings;
use super::output::{Report, Table};
use crate::error::{Error, Result};
use crate::inference::{error_bar, make_prior, ErrorBar, InfoGainSweep};
use crate::ingest::{
    estimate_lambda, fit_calibration_histogram, load_raw_shots, load_record, save_record, CalibrationFit,
    MappingDiagnostics,
};
use crate::physics::LikelihoodModel;
use crate::protocols::{
    least_squares_fit, replay_reordered, run_unoptimised, shots_to_settle, two_parameter_posterior, AdaptiveSession,
    FitOptions, LambdaRange, MeasurementRecord, OutcomeSource, ReplayOrder, SessionStep, TimePolicy,
};
use crate::simulation::{
    convergence_study, default_k_grid, validity_scan, variability_study, BenchmarkConfig, GravityAxis, Protocol,
    SyntheticConfig, SyntheticSource, TrajectoryConfig,
};
use crate::units::{format_micros, kelvin_from_micro, micro_from_kelvin, micro_from_seconds, seconds_from_micro};

fn uk(k: f64) -> f64 {
    micro_from_kelvin(k)
}

fn us(s: f64) -> f64 {
    micro_from_seconds(s)
}

fn model_name(model: &LikelihoodModel) -> &'static str {
    if model.is_multi_atom() {
        "multi_atom"
    } else {
        "single_atom"
    }
}

fn load_nonempty(path: &Path) -> Result<MeasurementRecord> {
    let record = load_record(path)?;
    if record.shots.is_empty() {
        return Err(Error::EmptyRecord);
    }
    Ok(record)
}

#[derive(Serialize)]
struct TraceRow {
    shot: usize,
    t_us: f64,
    atoms: u32,
    estimate_uk: f64,
    delta_uk: f64,
}

#[derive(Serialize)]
struct EstimateOut {
    estimate_uk: f64,
    delta_uk: f64,
    relative_error: f64,
    shots: usize,
    calibration_shots: usize,
    model: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<TraceRow>>,
}

pub fn estimate(s: &Settings, path: &Path, with_trace: bool, lambda_range: Option<&str>) -> Result<Report> {
    let record = load_nonempty(path)?;
    if let Some(range) = lambda_range {
        return estimate_joint(s, &record, range);
    }
    let model = s.model_for(&record)?;
    let run = run_unoptimised(&record, &s.prior, &model)?;
    let trace: Vec<TraceRow> = run
        .trace
        .iter()
        .enumerate()
        .map(|(i, e)| TraceRow {
            shot: i + 1,
            t_us: us(e.time),
            atoms: e.atoms,
            estimate_uk: uk(e.estimate),
            delta_uk: uk(e.delta),
        })
        .collect();
    let bar = run.result;
    let mut text = format!("estimate: {bar}\nshots: {}\n", record.shots.len());
    if let Some(l) = model.mean_loading() {
        let _ = writeln!(text, "lambda: {l:.4}");
    }
    let csv = if with_trace {
        let mut t = Table::new(&["shot", "t_us", "atoms", "estimate_uk", "delta_uk"]);
        for r in &trace {
            let t_us = format_micros(seconds_from_micro(r.t_us));
            t.row(&[&r.shot, &t_us, &r.atoms, &r.estimate_uk, &r.delta_uk]);
            let _ = writeln!(text, "{:>5}  t_us={t_us:<6} n={}  {:.3} ± {:.3} µK", r.shot, r.atoms, r.estimate_uk, r.delta_uk);
        }
        t.finish()
    } else {
        let mut t = Table::new(&["estimate_uk", "delta_uk", "shots"]);
        t.row(&[&uk(bar.estimate), &uk(bar.delta), &record.shots.len()]);
        t.finish()
    };
    let out = EstimateOut {
        estimate_uk: uk(bar.estimate),
        delta_uk: uk(bar.delta),
        relative_error: bar.relative(),
        shots: record.shots.len(),
        calibration_shots: record.calibration.len(),
        model: model_name(&model),
        lambda: model.mean_loading(),
        trace: with_trace.then_some(trace),
    };
    Report::new(text, &out, csv)
}

#[derive(Serialize)]
struct JointOut {
    estimate_uk: f64,
    delta_uk: f64,
    lambda_mean: f64,
    shots: usize,
    calibration_shots: usize,
}

fn estimate_joint(s: &Settings, record: &MeasurementRecord, range: &str) -> Result<Report> {
    let parts: Vec<&str> = range.split(':').collect();
    let parsed = match parts.as_slice() {
        [a, b, n] => a.parse().ok().zip(b.parse().ok()).zip(n.parse().ok()),
        _ => None,
    };
    let Some(((min, max), points)) = parsed else {
        return Err(Error::Domain(format!("--lambda-range must look like MIN:MAX:N, got {range:?}")));
    };
    let joint = two_parameter_posterior(record, &s.prior, &LambdaRange { min, max, points }, &s.trap)?;
    let est = joint.estimate();
    let bar = ErrorBar { estimate: est, delta: est * joint.mean_log_error(est).sqrt() };
    let out = JointOut {
        estimate_uk: uk(bar.estimate),
        delta_uk: uk(bar.delta),
        lambda_mean: joint.lambda_mean(),
        shots: record.shots.len(),
        calibration_shots: record.calibration.len(),
    };
    let text = format!("estimate: {bar}\nlambda (posterior mean): {:.4}\nshots: {}\n", out.lambda_mean, out.shots);
    let mut t = Table::new(&["estimate_uk", "delta_uk", "lambda_mean", "shots"]);
    t.row(&[&out.estimate_uk, &out.delta_uk, &out.lambda_mean, &out.shots]);
    Report::new(text, &out, t.finish())
}

#[derive(Serialize)]
struct FitOut {
    temperature_uk: f64,
    temperature_sigma_uk: f64,
    lambda: f64,
    lambda_sigma: f64,
    lambda_fixed: bool,
    residual: f64,
    converged: bool,
    iterations: usize,
}

pub fn fit(s: &Settings, path: &Path, fix_lambda: bool) -> Result<Report> {
    let record = load_nonempty(path)?;
    let mut options = FitOptions { initial_temperature: s.prior.geometric_mean(), ..FitOptions::default() };
    if fix_lambda {
        options.fix_lambda = Some(s.lambda_for(&record)?);
    }
    let r = least_squares_fit(&record, &s.trap, &options)?;
    let out = FitOut {
        temperature_uk: uk(r.temperature),
        temperature_sigma_uk: uk(r.temperature_sigma),
        lambda: r.lambda_fit,
        lambda_sigma: r.lambda_sigma,
        lambda_fixed: fix_lambda,
        residual: r.residual,
        converged: r.converged,
        iterations: r.iterations,
    };
    let mut text = format!("temperature: {:.3} ± {:.3} µK\n", out.temperature_uk, out.temperature_sigma_uk);
    if fix_lambda {
        let _ = writeln!(text, "lambda: {:.4} (fixed)", out.lambda);
    } else {
        let _ = writeln!(text, "lambda: {:.4} ± {:.4}", out.lambda, out.lambda_sigma);
    }
    let _ = writeln!(text, "residual: {:.6}\nconverged: {} after {} iterations", out.residual, out.converged, out.iterations);
    let mut t = Table::new(&["temperature_uk", "temperature_sigma_uk", "lambda", "lambda_sigma", "residual", "converged"]);
    t.row(&[&out.temperature_uk, &out.temperature_sigma_uk, &out.lambda, &out.lambda_sigma, &out.residual, &out.converged]);
    Report::new(text, &out, t.finish())
}

#[derive(Serialize)]
struct GainRow {
    t_us: f64,
    info_gain: f64,
}

#[derive(Serialize)]
struct OptimalTimeOut {
    t_s_us: f64,
    model: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    prior_uk: [f64; 2],
    curve: Vec<GainRow>,
}

pub fn optimal_time(s: &Settings) -> Result<Report> {
    let model = s.model()?;
    let prior = make_prior(&s.prior)?;
    let sweep = InfoGainSweep::new(model, s.grid.clone(), prior.support());
    let curve = sweep.curve(&prior)?;
    let t_s = curve.argmax().ok_or_else(|| Error::Domain("empty time grid".into()))?;
    let rows: Vec<GainRow> =
        curve.times.iter().zip(&curve.gains).map(|(&t, &k)| GainRow { t_us: us(t), info_gain: k }).collect();
    let mut text = format!("t_s_us: {}\n", format_micros(t_s));
    let mut t = Table::new(&["t_us", "info_gain"]);
    for (time, r) in curve.times.iter().zip(&rows) {
        t.row(&[&format_micros(*time), &r.info_gain]);
    }
    let csv = t.finish();
    text.push_str(&csv);
    let out = OptimalTimeOut {
        t_s_us: us(t_s),
        model: model_name(&model),
        lambda: model.mean_loading(),
        prior_uk: [uk(s.prior.theta_min), uk(s.prior.theta_max)],
        curve: rows,
    };
    Report::new(text, &out, csv)
}

#[derive(Serialize)]
struct StepRow {
    shot: usize,
    t_us: f64,
    atoms: u32,
    estimate_uk: f64,
    delta_uk: f64,
    next_time_us: f64,
    overridden: bool,
}

impl StepRow {
    fn new(i: usize, s: &SessionStep) -> Self {
        Self {
            shot: i + 1,
            t_us: us(s.time),
            atoms: s.atoms,
            estimate_uk: uk(s.estimate),
            delta_uk: uk(s.delta),
            next_time_us: us(s.next_time),
            overridden: s.overridden,
        }
    }
}

#[derive(Serialize)]
struct AdaptOut {
    policy: &'static str,
    estimate_uk: f64,
    delta_uk: f64,
    shots: usize,
    next_time_us: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulated_temperature_uk: Option<f64>,
    trace: Vec<StepRow>,
}

fn step_line(step: &SessionStep) -> String {
    format!(
        "t_us={} n={} -> {} next t_us={}",
        format_micros(step.time),
        step.atoms,
        ErrorBar { estimate: step.estimate, delta: step.delta },
        format_micros(step.next_time)
    )
}

pub struct AdaptOptions<'a> {
    pub simulate: Option<f64>,
    pub shots: Option<usize>,
    pub a_priori: bool,
    pub record_out: Option<&'a Path>,
}

/// Interactive input: `n` at the recommended time, or `n@t_us` to override it.
fn parse_outcome(line: &str) -> Result<(Option<f64>, i64)> {
    let (n, t) = match line.split_once('@') {
        Some((n, t)) => (n.trim(), Some(t.trim())),
        None => (line, None),
    };
    let n: i64 = n.parse().map_err(|_| Error::Domain(format!("expected an atom number, got {n:?}")))?;
    let t = match t {
        Some(t) => {
            let t_us: f64 = t.parse().map_err(|_| Error::Domain(format!("expected a release time in µs, got {t:?}")))?;
            Some(seconds_from_micro(t_us))
        }
        None => None,
    };
    Ok((t, n))
}

pub fn adapt(
    s: &Settings,
    opts: &AdaptOptions<'_>,
    stdin: &mut dyn BufRead,
    prompt_out: &mut dyn Write,
    stderr: &mut dyn Write,
    stream_text: bool,
) -> Result<Report> {
    let model = s.model()?;
    let prior = make_prior(&s.prior)?;
    let sweep = InfoGainSweep::new(model, s.grid.clone(), prior.support());
    let mut session = AdaptiveSession::from_sweep(s.prior, &sweep, TimePolicy::Adaptive)?;
    if opts.a_priori {
        let policy = TimePolicy::Fixed { time: session.next_time() };
        session = AdaptiveSession::from_sweep(s.prior, &sweep, policy)?;
    }
    match opts.simulate {
        Some(t_uk) => {
            let lambda = model.mean_loading().unwrap_or(1.0);
            let cfg = SyntheticConfig::new(kelvin_from_micro(t_uk), lambda, s.trap, s.seed)?;
            let mut source = SyntheticSource::new(cfg, model, 0);
            for _ in 0..opts.shots.unwrap_or(210) {
                let n = source.outcome(session.next_time())?;
                let step = session.step(n)?;
                if stream_text {
                    writeln!(prompt_out, "{}", step_line(step))?;
                }
            }
        }
        None => loop {
            if opts.shots.is_some_and(|k| session.shots() >= k) {
                break;
            }
            write!(prompt_out, "t_us={} n=? ", format_micros(session.next_time()))?;
            prompt_out.flush()?;
            let mut line = String::new();
            if stdin.read_line(&mut line)? == 0 {
                writeln!(prompt_out)?;
                break;
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let result = parse_outcome(line).and_then(|(t, n)| match t {
                Some(t) => session.submit(t, n).copied(),
                None => session.step(n).copied(),
            });
            match result {
                Ok(step) => writeln!(prompt_out, "{}", step_line(&step))?,
                Err(e) => writeln!(stderr, "rejected: {e}")?,
            }
        },
    }
    if let Some(path) = opts.record_out {
        save_record(session.record(), path)?;
    }
    let bar = session.estimate();
    let trace: Vec<StepRow> = session.trace().iter().enumerate().map(|(i, st)| StepRow::new(i, st)).collect();
    let mut t = Table::new(&["shot", "t_us", "atoms", "estimate_uk", "delta_uk", "next_time_us", "overridden"]);
    for r in &trace {
        t.row(&[&r.shot, &r.t_us, &r.atoms, &r.estimate_uk, &r.delta_uk, &r.next_time_us, &r.overridden]);
    }
    let text = format!("final: {bar} after {} shots\n", session.shots());
    let out = AdaptOut {
        policy: if opts.a_priori { "a_priori" } else { "adaptive" },
        estimate_uk: uk(bar.estimate),
        delta_uk: uk(bar.delta),
        shots: session.shots(),
        next_time_us: us(session.next_time()),
        simulated_temperature_uk: opts.simulate,
        trace,
    };
    Report::new(text, &out, t.finish())
}

pub struct StudyOptions<'a> {
    pub kind: StudyKind,
    pub protocols: &'a [Protocol],
    pub runs: usize,
    pub temperature_uk: f64,
    pub ks: &'a [usize],
    pub known_lambda: bool,
}

#[derive(Serialize)]
struct VariabilityOut {
    protocol: Protocol,
    runs: usize,
    true_temperature_uk: f64,
    variability: f64,
    bias_variability: f64,
    mean_estimate_uk: f64,
    estimates_uk: Vec<f64>,
}

#[derive(Serialize)]
struct ConvergenceOut {
    protocol: Protocol,
    runs: usize,
    ks: Vec<usize>,
    variabilities: Vec<f64>,
    exponent: f64,
    f: f64,
    f_unit: f64,
    onset: Option<usize>,
    points_used: usize,
}

pub fn simulate(s: &Settings, opts: &StudyOptions<'_>) -> Result<Report> {
    if s.single_atom {
        return Err(Error::Domain("studies use the multi-atom model; drop --single-atom".into()));
    }
    let mut cfg = BenchmarkConfig::deep(s.seed);
    cfg.synthetic = SyntheticConfig::new(kelvin_from_micro(opts.temperature_uk), s.lambda()?, s.trap, s.seed)?;
    cfg.prior = s.prior;
    cfg.atom_cap = s.cap;
    cfg.known_lambda = opts.known_lambda;
    cfg.time_grid = s.grid.clone();
    let protocols = if opts.protocols.is_empty() { Protocol::ALL.as_slice() } else { opts.protocols };
    match opts.kind {
        StudyKind::Variability => {
            let mut rows = Vec::new();
            let mut text = format!(
                "variability at {} µK, {} runs of {} shots\n",
                opts.temperature_uk,
                opts.runs,
                cfg.total_shots()
            );
            let mut t = Table::new(&["protocol", "runs", "variability", "bias_variability", "mean_estimate_uk"]);
            for &p in protocols {
                let r = variability_study(p, &cfg, opts.runs)?;
                let estimates_uk: Vec<f64> = r.estimates.iter().map(|&e| uk(e)).collect();
                let mean = estimates_uk.iter().sum::<f64>() / estimates_uk.len() as f64;
                let _ = writeln!(
                    text,
                    "{:<14} variability {:.4}  bias-variability {:.4}  mean {:.3} µK",
                    p.name(),
                    r.variability,
                    r.bias_variability,
                    mean
                );
                t.row(&[&p.name(), &opts.runs, &r.variability, &r.bias_variability, &mean]);
                rows.push(VariabilityOut {
                    protocol: p,
                    runs: opts.runs,
                    true_temperature_uk: uk(r.true_temperature),
                    variability: r.variability,
                    bias_variability: r.bias_variability,
                    mean_estimate_uk: mean,
                    estimates_uk,
                });
            }
            Report::new(text, &rows, t.finish())
        }
        StudyKind::Convergence => {
            let ks = if opts.ks.is_empty() { default_k_grid() } else { opts.ks.to_vec() };
            let mut rows = Vec::new();
            let mut text = format!("convergence at {} µK, {} runs per k\n", opts.temperature_uk, opts.runs);
            let mut t = Table::new(&["protocol", "k", "variability"]);
            for &p in protocols {
                let r = convergence_study(p, &cfg, opts.runs, &ks)?;
                for (k, v) in r.ks.iter().zip(&r.variabilities) {
                    t.row(&[&p.name(), k, v]);
                }
                let onset = r.fit.onset.map_or("none".to_string(), |k| k.to_string());
                let _ = writeln!(
                    text,
                    "{:<14} exponent {:.4}  F {:.4}  F(a=1) {:.4}  onset k = {onset}  ({} points)",
                    p.name(),
                    r.fit.exponent,
                    r.fit.f,
                    r.fit.f_unit,
                    r.fit.points_used
                );
                rows.push(ConvergenceOut {
                    protocol: p,
                    runs: opts.runs,
                    ks: r.ks,
                    variabilities: r.variabilities,
                    exponent: r.fit.exponent,
                    f: r.fit.f,
                    f_unit: r.fit.f_unit,
                    onset: r.fit.onset,
                    points_used: r.fit.points_used,
                });
            }
            Report::new(text, &rows, t.finish())
        }
    }
}

#[derive(Serialize)]
struct CalibrateOut {
    fit: CalibrationFit,
    samples: usize,
    lambda: Option<f64>,
    lambda_unusable: bool,
    calibration_shots: usize,
    diagnostics: MappingDiagnostics,
}

pub fn calibrate(
    s: &Settings,
    path: &Path,
    peaks: Option<usize>,
    calibration_only: bool,
    record_out: Option<&Path>,
) -> Result<Report> {
    let raw = load_raw_shots(path)?;
    let counts = if calibration_only { raw.calibration_counts() } else { raw.counts() };
    let fit = fit_calibration_histogram(&counts, peaks.unwrap_or(s.cap as usize + 1))?;
    let (record, diagnostics) = raw.to_record(&fit, s.cap);
    let lambda = if record.calibration.is_empty() { None } else { Some(estimate_lambda(&record.calibration)?) };
    if let Some(out) = record_out {
        save_record(&record, out)?;
    }
    let mut text = format!(
        "empty-trap peak m: {:.3}\npeak spacing: {:.3}\npeak width: {:.3}\npeaks: {}\n",
        fit.peak_offset, fit.peak_spacing, fit.widths[0], fit.n_peaks
    );
    match lambda {
        Some(l) if l.unusable => text.push_str("lambda: 0 (unusable: no atoms in any calibration shot)\n"),
        Some(l) => {
            let _ = writeln!(text, "lambda: {:.4} from {} calibration shots", l.lambda, l.samples);
        }
        None => text.push_str("lambda: no t_us = 0 rows\n"),
    }
    let _ = writeln!(text, "clamped below zero: {}\nclamped above cap: {}", diagnostics.below_zero, diagnostics.above_cap);
    let mut t = Table::new(&["peak_offset", "peak_spacing", "peak_width", "n_peaks", "lambda"]);
    let l = lambda.map_or(String::new(), |l| l.lambda.to_string());
    t.row(&[&fit.peak_offset, &fit.peak_spacing, &fit.widths[0], &fit.n_peaks, &l]);
    let out = CalibrateOut {
        samples: counts.len(),
        lambda: lambda.map(|l| l.lambda),
        lambda_unusable: lambda.is_some_and(|l| l.unusable),
        calibration_shots: record.calibration.len(),
        diagnostics,
        fit,
    };
    Report::new(text, &out, t.finish())
}

pub struct ValidateOptions<'a> {
    pub temperatures_uk: &'a [f64],
    pub times_us: &'a [f64],
    pub trajectories: usize,
    pub planar: bool,
    pub gravity_axis: AxisArg,
    pub keep_untrapped: bool,
}

#[derive(Serialize)]
struct CellOut {
    temperature_uk: f64,
    t_us: f64,
    analytic: f64,
    simulated: f64,
    std_error: f64,
    deviation: f64,
    untrapped_fraction: f64,
    flagged: bool,
}

pub fn validate_model(s: &Settings, opts: &ValidateOptions<'_>) -> Result<Report> {
    let temps_uk: Vec<f64> = if opts.temperatures_uk.is_empty() {
        [10.0, 20.0, 40.0, 60.0, 80.0, 100.0, 125.0]
            .into_iter()
            .filter(|&t| kelvin_from_micro(t) < s.trap.trap_depth)
            .collect()
    } else {
        opts.temperatures_uk.to_vec()
    };
    let temps: Vec<f64> = temps_uk.iter().map(|&t| kelvin_from_micro(t)).collect();
    let times: Vec<f64> = opts.times_us.iter().map(|&t| seconds_from_micro(t)).collect();
    let mut cfg =
        if opts.planar { TrajectoryConfig::planar(opts.trajectories, s.seed) } else { TrajectoryConfig::default() };
    cfg.n_trajectories = opts.trajectories;
    cfg.seed = s.seed;
    cfg.gravity_axis = match opts.gravity_axis {
        AxisArg::Axial => GravityAxis::Axial,
        AxisArg::Radial => GravityAxis::Radial,
    };
    cfg.reject_untrapped = !opts.keep_untrapped;
    let cells = validity_scan(&s.trap, &temps, &times, &cfg)?;
    let rows: Vec<CellOut> = cells
        .iter()
        .map(|c| CellOut {
            temperature_uk: uk(c.temperature),
            t_us: us(c.time),
            analytic: c.analytic,
            simulated: c.simulated,
            std_error: c.std_error,
            deviation: c.deviation,
            untrapped_fraction: c.untrapped_fraction,
            flagged: c.flagged,
        })
        .collect();
    let mut text = format!(
        "closed form against {} trajectories per cell ({}); deviation = analytic - simulated\n",
        opts.trajectories,
        if opts.planar { "planar" } else { "3D" }
    );
    let mut t = Table::new(&[
        "temperature_uk",
        "t_us",
        "analytic",
        "simulated",
        "std_error",
        "deviation",
        "untrapped_fraction",
        "flagged",
    ]);
    for r in &rows {
        let t_us = format_micros(seconds_from_micro(r.t_us));
        t.row(&[&r.temperature_uk, &t_us, &r.analytic, &r.simulated, &r.std_error, &r.deviation, &r.untrapped_fraction, &r.flagged]);
        let _ = writeln!(
            text,
            "T={:>7.2} µK  t={t_us:>5} µs  analytic {:.4}  simulated {:.4} ± {:.4}  deviation {:+.4}{}",
            r.temperature_uk,
            r.analytic,
            r.simulated,
            r.std_error,
            r.deviation,
            if r.flagged { "  FLAGGED" } else { "" }
        );
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let _ = writeln!(text, "flagged cells: {flagged} of {}", rows.len());
    Report::new(text, &rows, t.finish())
}

#[derive(Serialize)]
struct ReplayOut {
    order: ReplayOrder,
    t_s_us: f64,
    estimate_uk: f64,
    delta_uk: f64,
    shots: usize,
    shots_to_settle: Option<usize>,
    settle_fraction: Option<f64>,
    trace: Vec<TraceRow>,
}

pub fn replay(s: &Settings, path: &Path, order: ReplayOrder) -> Result<Report> {
    let record = load_nonempty(path)?;
    let model = s.model_for(&record)?;
    let replay = replay_reordered(&record, &s.prior, &model, &s.grid, order)?;
    let settle = shots_to_settle(&replay.run.trace);
    let n = replay.shots.len();
    let bar = error_bar(&replay.run.posterior);
    let trace: Vec<TraceRow> = replay
        .run
        .trace
        .iter()
        .enumerate()
        .map(|(i, e)| TraceRow {
            shot: i + 1,
            t_us: us(e.time),
            atoms: e.atoms,
            estimate_uk: uk(e.estimate),
            delta_uk: uk(e.delta),
        })
        .collect();
    let mut t = Table::new(&["shot", "t_us", "atoms", "estimate_uk", "delta_uk"]);
    for r in &trace {
        t.row(&[&r.shot, &format_micros(seconds_from_micro(r.t_us)), &r.atoms, &r.estimate_uk, &r.delta_uk]);
    }
    let settle_fraction = settle.map(|k| k as f64 / n as f64);
    let mut text = format!("t_s_us: {}\nfinal: {bar} after {n} shots\n", format_micros(replay.optimal_time));
    match (settle, settle_fraction) {
        (Some(k), Some(f)) => {
            let _ = writeln!(text, "inside final error band from shot {k} ({:.1}% of shots)", 100.0 * f);
        }
        _ => text.push_str("never settles inside the final error band\n"),
    }
    let out = ReplayOut {
        order,
        t_s_us: us(replay.optimal_time),
        estimate_uk: uk(bar.estimate),
        delta_uk: uk(bar.delta),
        shots: n,
        shots_to_settle: settle,
        settle_fraction,
        trace,
    };
    Report::new(text, &out, t.finish())
}
