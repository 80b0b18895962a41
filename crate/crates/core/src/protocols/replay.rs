//! Reprocessing a recorded data set in an order set by distance to the optimal time.

use serde::{Deserialize, Serialize};

use super::record::{MeasurementRecord, Shot};
use super::sequential::{run_unoptimised, BayesRun, TraceEntry};
use crate::error::{Error, Result};
use crate::inference::{make_prior, optimal_time, PriorSpec, TimeGrid};
use crate::physics::LikelihoodModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayOrder {
    /// Shots closest to the a-priori optimal time first.
    Nearest,
    /// Shots farthest from it first.
    Farthest,
}

impl std::str::FromStr for ReplayOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "farthest" => Ok(Self::Farthest),
            other => Err(Error::domain(format!("unknown replay order {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub optimal_time: f64,
    pub shots: Vec<Shot>,
    pub run: BayesRun,
}

/// Groups shots by recorded time, orders the groups by |t − t_s|, and
/// processes the concatenation sequentially.
pub fn replay_reordered(
    record: &MeasurementRecord,
    spec: &PriorSpec,
    model: &LikelihoodModel,
    grid: &TimeGrid,
    order: ReplayOrder,
) -> Result<Replay> {
    if record.shots.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let prior = make_prior(spec)?;
    let t_s = optimal_time(&prior, model, grid.times())?;
    let mut groups: Vec<(f64, Vec<Shot>)> = Vec::new();
    for shot in &record.shots {
        match groups.iter_mut().find(|g| g.0 == shot.time) {
            Some(g) => g.1.push(*shot),
            None => groups.push((shot.time, vec![*shot])),
        }
    }
    // stable sort keeps first-appearance order among equidistant groups
    match order {
        ReplayOrder::Nearest => groups.sort_by(|a, b| (a.0 - t_s).abs().total_cmp(&(b.0 - t_s).abs())),
        ReplayOrder::Farthest => groups.sort_by(|a, b| (b.0 - t_s).abs().total_cmp(&(a.0 - t_s).abs())),
    }
    let shots: Vec<Shot> = groups.into_iter().flat_map(|g| g.1).collect();
    let reordered = MeasurementRecord { shots: shots.clone(), ..record.clone() };
    let run = run_unoptimised(&reordered, spec, model)?;
    Ok(Replay { optimal_time: t_s, shots, run })
}

/// Number of leading shots after which every later estimate lies within
/// the final error bar of the final estimate.
pub fn shots_to_settle(trace: &[TraceEntry]) -> Option<usize> {
    let last = trace.last()?;
    let settled_from = trace
        .iter()
        .rposition(|e| (e.estimate - last.estimate).abs() > last.delta)
        .map_or(0, |k| k + 1);
    Some(settled_from + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::TrapConfig;

    fn entry(estimate: f64) -> TraceEntry {
        TraceEntry { time: 0.0, atoms: 0, estimate, delta: 1.0 }
    }

    #[test]
    fn settle_index() {
        assert_eq!(shots_to_settle(&[]), None);
        assert_eq!(shots_to_settle(&[entry(5.0)]), Some(1));
        let trace = [entry(10.0), entry(3.0), entry(7.0), entry(5.5), entry(5.0)];
        assert_eq!(shots_to_settle(&trace), Some(4));
        let trace = [entry(5.2), entry(4.9), entry(5.0)];
        assert_eq!(shots_to_settle(&trace), Some(1));
    }

    #[test]
    fn orders_by_distance_and_ends_equal() {
        let model = LikelihoodModel::multi_atom(TrapConfig::shallow(), 1.88, 7).unwrap();
        let spec = PriorSpec::with_support(5.5e-6, 30e-6).unwrap();
        let mut shots = Vec::new();
        for (k, t_us) in [100.0, 42.0, 10.0, 60.0, 40.0].iter().enumerate() {
            for j in 0..4u32 {
                shots.push(Shot { time: t_us * 1e-6, atoms: (j + k as u32) % 3 });
            }
        }
        let record = MeasurementRecord::new(shots, vec![2, 1, 2]).unwrap();
        let grid = TimeGrid::default();
        let near = replay_reordered(&record, &spec, &model, &grid, ReplayOrder::Nearest).unwrap();
        let far = replay_reordered(&record, &spec, &model, &grid, ReplayOrder::Farthest).unwrap();
        assert_eq!(near.optimal_time, 42e-6);
        let near_times: Vec<f64> = near.shots.iter().step_by(4).map(|s| (s.time * 1e6).round()).collect();
        assert_eq!(near_times, vec![42.0, 40.0, 60.0, 10.0, 100.0]);
        let far_times: Vec<f64> = far.shots.iter().step_by(4).map(|s| (s.time * 1e6).round()).collect();
        assert_eq!(far_times, vec![100.0, 10.0, 60.0, 40.0, 42.0]);
        // within-group order preserved
        assert_eq!(near.shots[..4], record.shots[4..8]);
        let (a, b) = (near.run.result.estimate, far.run.result.estimate);
        assert!((a - b).abs() < 1e-10 * a);
    }

    #[test]
    fn single_group_orders_agree() {
        let model = LikelihoodModel::single_atom(TrapConfig::deep()).unwrap();
        let spec = PriorSpec::with_support(14.5e-6, 125e-6).unwrap();
        let shots = (0..6).map(|j| Shot { time: 30e-6, atoms: j % 2 }).collect();
        let record = MeasurementRecord::new(shots, vec![]).unwrap();
        let grid = TimeGrid::default();
        let near = replay_reordered(&record, &spec, &model, &grid, ReplayOrder::Nearest).unwrap();
        let far = replay_reordered(&record, &spec, &model, &grid, ReplayOrder::Farthest).unwrap();
        assert_eq!(near.run.trace, far.run.trace);
    }

    #[test]
    fn parse_order() {
        assert_eq!("nearest".parse::<ReplayOrder>().unwrap(), ReplayOrder::Nearest);
        assert!("middle".parse::<ReplayOrder>().is_err());
    }
}
