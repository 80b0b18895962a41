use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One release–recapture shot: release time in seconds and surviving atoms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub time: f64,
    pub atoms: u32,
}

impl Shot {
    pub fn new(time: f64, atoms: u32) -> Result<Self> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::domain(format!("release time must be nonnegative, got {time}")));
        }
        Ok(Self { time, atoms })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

/// Ordered shots plus the zero-release calibration counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub shots: Vec<Shot>,
    pub calibration: Vec<u32>,
    #[serde(default)]
    pub metadata: RecordMetadata,
}

/// Mean outcome of all shots sharing one release time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGroup {
    pub time: f64,
    pub mean: f64,
    pub count: usize,
}

impl MeasurementRecord {
    pub fn new(shots: Vec<Shot>, calibration: Vec<u32>) -> Result<Self> {
        for shot in &shots {
            Shot::new(shot.time, shot.atoms)?;
        }
        Ok(Self { shots, calibration, metadata: RecordMetadata::default() })
    }

    pub fn push(&mut self, shot: Shot) {
        self.shots.push(shot);
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty() && self.calibration.is_empty()
    }

    pub fn calibration_mean(&self) -> Option<f64> {
        if self.calibration.is_empty() {
            None
        } else {
            Some(self.calibration.iter().map(|&n| n as f64).sum::<f64>() / self.calibration.len() as f64)
        }
    }

    /// Distinct release times in order of first appearance.
    pub fn distinct_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = Vec::new();
        for shot in &self.shots {
            if !times.contains(&shot.time) {
                times.push(shot.time);
            }
        }
        times
    }

    /// Per-time means, calibration folded into the `t = 0` group, sorted by time.
    pub fn time_groups(&self) -> Vec<TimeGroup> {
        let mut sums: Vec<(f64, f64, usize)> = Vec::new();
        if !self.calibration.is_empty() {
            let total = self.calibration.iter().map(|&n| n as f64).sum();
            sums.push((0.0, total, self.calibration.len()));
        }
        for shot in &self.shots {
            match sums.iter_mut().find(|g| g.0 == shot.time) {
                Some(g) => {
                    g.1 += shot.atoms as f64;
                    g.2 += 1;
                }
                None => sums.push((shot.time, shot.atoms as f64, 1)),
            }
        }
        sums.sort_by(|a, b| a.0.total_cmp(&b.0));
        sums.into_iter().map(|(time, total, count)| TimeGroup { time, mean: total / count as f64, count }).collect()
    }
}
