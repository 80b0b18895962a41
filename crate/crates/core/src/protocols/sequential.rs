//! Shot-by-shot Bayesian processing of a fixed record.

use serde::{Deserialize, Serialize};

use super::record::{MeasurementRecord, Shot};
use crate::error::{Error, Result};
use crate::inference::{error_bar, make_prior, ErrorBar, PosteriorGrid, PriorSpec};
use crate::physics::LikelihoodModel;

/// State after one processed shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub time: f64,
    pub atoms: u32,
    pub estimate: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesRun {
    pub posterior: PosteriorGrid,
    pub result: ErrorBar,
    pub trace: Vec<TraceEntry>,
}

/// Applies `shots` in order to `prior`, recording the estimate after each.
pub fn process_shots(prior: PosteriorGrid, model: &LikelihoodModel, shots: &[Shot]) -> Result<BayesRun> {
    let mut posterior = prior;
    let mut trace = Vec::with_capacity(shots.len());
    for shot in shots {
        let n = model.check_outcome(shot.atoms as i64)?;
        posterior = posterior.update(model, shot.time, n)?;
        let bar = error_bar(&posterior);
        trace.push(TraceEntry { time: shot.time, atoms: shot.atoms, estimate: bar.estimate, delta: bar.delta });
    }
    let result = error_bar(&posterior);
    Ok(BayesRun { posterior, result, trace })
}

/// Unoptimised protocol: the whole record processed in recorded order.
pub fn run_unoptimised(record: &MeasurementRecord, spec: &PriorSpec, model: &LikelihoodModel) -> Result<BayesRun> {
    if record.shots.is_empty() {
        return Err(Error::EmptyRecord);
    }
    process_shots(make_prior(spec)?, model, &record.shots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::estimate;
    use crate::physics::TrapConfig;

    fn spec() -> PriorSpec {
        PriorSpec::with_support(14.5e-6, 125e-6).unwrap()
    }

    #[test]
    fn zero_time_shots_leave_prior() {
        let model = LikelihoodModel::multi_atom(TrapConfig::deep(), 1.65, 7).unwrap();
        let shots = (0..5).map(|n| Shot { time: 0.0, atoms: n }).collect();
        let record = MeasurementRecord::new(shots, vec![]).unwrap();
        let run = run_unoptimised(&record, &spec(), &model).unwrap();
        let geometric = (14.5e-6f64 * 125e-6).sqrt();
        assert!((run.result.estimate - geometric).abs() < 1e-10 * geometric);
        assert_eq!(run.trace.len(), 5);
    }

    #[test]
    fn one_shot_matches_direct_update() {
        let model = LikelihoodModel::single_atom(TrapConfig::deep()).unwrap();
        let record = MeasurementRecord::new(vec![Shot { time: 14e-6, atoms: 1 }], vec![]).unwrap();
        let run = run_unoptimised(&record, &spec(), &model).unwrap();
        let direct = make_prior(&spec()).unwrap().update(&model, 14e-6, 1).unwrap();
        assert_eq!(run.posterior, direct);
        assert_eq!(run.result.estimate, estimate(&direct));
    }

    #[test]
    fn empty_and_invalid_records() {
        let model = LikelihoodModel::single_atom(TrapConfig::deep()).unwrap();
        let empty = MeasurementRecord::default();
        assert!(matches!(run_unoptimised(&empty, &spec(), &model), Err(Error::EmptyRecord)));
        let bad = MeasurementRecord::new(vec![Shot { time: 14e-6, atoms: 2 }], vec![]).unwrap();
        assert!(matches!(run_unoptimised(&bad, &spec(), &model), Err(Error::InvalidOutcome { .. })));
    }
}
