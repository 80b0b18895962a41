//! Adaptive and a-priori optimised measurement sessions.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::record::{MeasurementRecord, Shot};
use crate::error::{Error, Result};
use crate::inference::{error_bar, make_prior, ErrorBar, InfoGainCurve, InfoGainSweep, PosteriorGrid, PriorSpec, TimeGrid};
use crate::physics::LikelihoodModel;

/// How the next release time is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimePolicy {
    /// Maximise the information gain under the current posterior after every shot.
    Adaptive,
    /// Always the same time (a-priori optimised, or any fixed choice).
    Fixed { time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionStep {
    pub time: f64,
    pub atoms: u32,
    pub estimate: f64,
    pub delta: f64,
    pub next_time: f64,
    /// The shot was taken at a time other than the recommendation.
    pub overridden: bool,
}

/// Everything needed to rebuild a session exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub prior_spec: PriorSpec,
    pub model: LikelihoodModel,
    pub time_grid: TimeGrid,
    pub policy: TimePolicy,
    pub record: MeasurementRecord,
}

#[derive(Debug, Clone)]
pub struct AdaptiveSession {
    prior_spec: PriorSpec,
    policy: TimePolicy,
    sweep: InfoGainSweep,
    prior: PosteriorGrid,
    initial_next_time: f64,
    record: MeasurementRecord,
    posterior: PosteriorGrid,
    next_time: f64,
    trace: Vec<SessionStep>,
}

impl AdaptiveSession {
    pub fn new(spec: PriorSpec, model: LikelihoodModel, grid: TimeGrid, policy: TimePolicy) -> Result<Self> {
        let prior = make_prior(&spec)?;
        let sweep = InfoGainSweep::new(model, grid, prior.support());
        Self::with_prior(spec, prior, sweep, policy)
    }

    /// Session on a precomputed sweep whose support must match `spec`.
    pub fn from_sweep(spec: PriorSpec, sweep: &InfoGainSweep, policy: TimePolicy) -> Result<Self> {
        let prior = make_prior(&spec)?;
        Self::with_prior(spec, prior, sweep.clone(), policy)
    }

    /// A-priori optimised session: every shot at the time maximising the gain under the prior.
    pub fn a_priori(spec: PriorSpec, model: LikelihoodModel, grid: TimeGrid) -> Result<Self> {
        let prior = make_prior(&spec)?;
        let sweep = InfoGainSweep::new(model, grid, prior.support());
        let time = sweep.optimal_time(&prior)?;
        Self::with_prior(spec, prior, sweep, TimePolicy::Fixed { time })
    }

    fn with_prior(spec: PriorSpec, prior: PosteriorGrid, sweep: InfoGainSweep, policy: TimePolicy) -> Result<Self> {
        if let TimePolicy::Fixed { time } = policy {
            if !(time.is_finite() && time >= 0.0) {
                return Err(Error::domain(format!("fixed release time must be nonnegative, got {time}")));
            }
        }
        let next_time = recommend(&sweep, policy, &prior)?;
        Ok(Self {
            prior_spec: spec,
            policy,
            sweep,
            posterior: prior.clone(),
            prior,
            initial_next_time: next_time,
            record: MeasurementRecord::default(),
            next_time,
            trace: Vec::new(),
        })
    }

    /// Rebuilds a session by submitting every recorded shot in order.
    pub fn restore(snapshot: &SessionSnapshot) -> Result<Self> {
        let mut session = Self::new(snapshot.prior_spec, snapshot.model, snapshot.time_grid.clone(), snapshot.policy)?;
        for shot in &snapshot.record.shots {
            session.submit(shot.time, shot.atoms as i64)?;
        }
        session.record.calibration = snapshot.record.calibration.clone();
        session.record.metadata = snapshot.record.metadata.clone();
        Ok(session)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            prior_spec: self.prior_spec,
            model: *self.model(),
            time_grid: self.sweep.grid().clone(),
            policy: self.policy,
            record: self.record.clone(),
        }
    }

    pub fn prior_spec(&self) -> &PriorSpec {
        &self.prior_spec
    }

    pub fn model(&self) -> &LikelihoodModel {
        self.sweep.model()
    }

    pub fn time_grid(&self) -> &TimeGrid {
        self.sweep.grid()
    }

    pub fn policy(&self) -> TimePolicy {
        self.policy
    }

    pub fn record(&self) -> &MeasurementRecord {
        &self.record
    }

    pub fn posterior(&self) -> &PosteriorGrid {
        &self.posterior
    }

    pub fn next_time(&self) -> f64 {
        self.next_time
    }

    pub fn trace(&self) -> &[SessionStep] {
        &self.trace
    }

    pub fn shots(&self) -> usize {
        self.record.shots.len()
    }

    pub fn estimate(&self) -> ErrorBar {
        error_bar(&self.posterior)
    }

    pub fn info_gain_curve(&self) -> Result<InfoGainCurve> {
        self.sweep.curve(&self.posterior)
    }

    /// Records outcome `n` at the recommended time.
    pub fn step(&mut self, n: i64) -> Result<&SessionStep> {
        self.submit(self.next_time, n)
    }

    /// Records outcome `n` at release time `t`, which may differ from the recommendation.
    /// On error the session is left unchanged.
    pub fn submit(&mut self, t: f64, n: i64) -> Result<&SessionStep> {
        let shot = Shot::new(t, self.model().check_outcome(n)?)?;
        let posterior = self.posterior.update(self.model(), shot.time, shot.atoms)?;
        let next_time = recommend(&self.sweep, self.policy, &posterior)?;
        let bar = error_bar(&posterior);
        let overridden = t != self.next_time;
        self.posterior = posterior;
        self.next_time = next_time;
        self.record.push(shot);
        self.trace.push(SessionStep {
            time: shot.time,
            atoms: shot.atoms,
            estimate: bar.estimate,
            delta: bar.delta,
            next_time,
            overridden,
        });
        Ok(self.trace.last().expect("just pushed"))
    }

    /// Drops the last shot and rebuilds the posterior from the prior.
    pub fn undo(&mut self) -> Result<Option<Shot>> {
        let Some(shot) = self.record.shots.pop() else {
            return Ok(None);
        };
        self.trace.pop();
        let mut posterior = self.prior.clone();
        for s in &self.record.shots {
            posterior = posterior.update(self.model(), s.time, s.atoms)?;
        }
        self.posterior = posterior;
        self.next_time = self.trace.last().map_or(self.initial_next_time, |s| s.next_time);
        Ok(Some(shot))
    }

    /// Requests up to `shots` outcomes at the recommended times. A failing
    /// source stops the loop with the shots taken so far kept.
    pub fn run<S: OutcomeSource + ?Sized>(&mut self, shots: usize, source: &mut S) -> Result<()> {
        for _ in 0..shots {
            let n = source.outcome(self.next_time)?;
            self.step(n)?;
        }
        Ok(())
    }
}

fn recommend(sweep: &InfoGainSweep, policy: TimePolicy, posterior: &PosteriorGrid) -> Result<f64> {
    match policy {
        TimePolicy::Adaptive => sweep.optimal_time(posterior),
        TimePolicy::Fixed { time } => Ok(time),
    }
}

/// Supplies the measured atom number for a requested release time.
pub trait OutcomeSource {
    fn outcome(&mut self, time: f64) -> Result<i64>;
}

impl<F: FnMut(f64) -> Result<i64>> OutcomeSource for F {
    fn outcome(&mut self, time: f64) -> Result<i64> {
        self(time)
    }
}

/// A protocol run that stopped early; `session` holds the shots taken.
#[derive(Debug)]
pub struct ProtocolAbort {
    pub session: Option<Box<AdaptiveSession>>,
    pub error: Error,
}

impl fmt::Display for ProtocolAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.session {
            Some(s) => write!(f, "protocol stopped after {} shots: {}", s.shots(), self.error),
            None => write!(f, "protocol could not start: {}", self.error),
        }
    }
}

impl std::error::Error for ProtocolAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<ProtocolAbort> for Error {
    fn from(abort: ProtocolAbort) -> Self {
        abort.error
    }
}

fn drive<S: OutcomeSource + ?Sized>(
    session: Result<AdaptiveSession>,
    shots: usize,
    source: &mut S,
) -> std::result::Result<AdaptiveSession, ProtocolAbort> {
    let mut session = session.map_err(|error| ProtocolAbort { session: None, error })?;
    match session.run(shots, source) {
        Ok(()) => Ok(session),
        Err(error) => Err(ProtocolAbort { session: Some(Box::new(session)), error }),
    }
}

/// All shots at the single time that maximises the gain under the prior.
pub fn apriori_protocol<S: OutcomeSource + ?Sized>(
    spec: PriorSpec,
    model: LikelihoodModel,
    grid: TimeGrid,
    shots: usize,
    source: &mut S,
) -> std::result::Result<AdaptiveSession, ProtocolAbort> {
    drive(AdaptiveSession::a_priori(spec, model, grid), shots, source)
}

/// Release time re-optimised after every shot.
pub fn adaptive_protocol<S: OutcomeSource + ?Sized>(
    spec: PriorSpec,
    model: LikelihoodModel,
    grid: TimeGrid,
    shots: usize,
    source: &mut S,
) -> std::result::Result<AdaptiveSession, ProtocolAbort> {
    drive(AdaptiveSession::new(spec, model, grid, TimePolicy::Adaptive), shots, source)
}
