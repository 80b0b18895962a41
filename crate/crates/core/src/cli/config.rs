//! Resolution of command-line flags, the defaults file and trap presets.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::args::{CommonArgs, Format, TrapPreset};
use crate::error::{Error, Result};
use crate::inference::{PriorSpec, TimeGrid, DEFAULT_GRID_POINTS};
use crate::ingest::load_record;
use crate::physics::{LikelihoodModel, TrapConfig, DEFAULT_ATOM_CAP};
use crate::protocols::MeasurementRecord;
use crate::units::{kelvin_from_micro, metres_from_micro};

pub const CONFIG_ENV: &str = "TWEEZER_THERMO_CONFIG";

/// Keys accepted in the defaults file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub trap: Option<TrapPreset>,
    pub depth_uk: Option<f64>,
    pub waist_um: Option<f64>,
    pub prior_uk: Option<[f64; 2]>,
    pub lambda: Option<f64>,
    pub calibration: Option<PathBuf>,
    pub cap: Option<u32>,
    pub grid_points: Option<usize>,
    pub t_min_us: Option<f64>,
    pub t_max_us: Option<f64>,
    pub t_step_us: Option<f64>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub single_atom: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Domain(format!("config file {}: {e}", path.display())))
    }
}

/// Where λ comes from when no `--lambda` is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSource {
    Explicit(f64),
    Preset(f64),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub trap: TrapConfig,
    pub prior: PriorSpec,
    pub single_atom: bool,
    lambda: LambdaSource,
    calibration: Option<PathBuf>,
    pub cap: u32,
    pub grid: TimeGrid,
    pub seed: u64,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

pub fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if let [a, b] = parts.as_slice() {
        if let (Ok(a), Ok(b)) = (a.trim().parse(), b.trim().parse()) {
            return Ok((a, b));
        }
    }
    Err(Error::Domain(format!("{what} must look like MIN:MAX, got {text:?}")))
}

impl Settings {
    pub fn resolve(args: &CommonArgs, file: &ConfigFile) -> Result<Self> {
        let preset = args.trap.or(file.trap).unwrap_or(TrapPreset::Deep);
        let (depth, waist, prior, lambda) = match preset {
            TrapPreset::Deep => (290.0, 1.971, (14.5, 125.0), 1.65),
            TrapPreset::Shallow => (110.0, 1.971, (5.5, 30.0), 1.88),
        };
        let depth_override = args.depth_uk.or(file.depth_uk);
        let waist_override = args.waist_um.or(file.waist_um);
        let trap = match (preset, depth_override, waist_override) {
            (TrapPreset::Deep, None, None) => TrapConfig::deep(),
            (TrapPreset::Shallow, None, None) => TrapConfig::shallow(),
            _ => TrapConfig::potassium(
                kelvin_from_micro(depth_override.unwrap_or(depth)),
                metres_from_micro(waist_override.unwrap_or(waist)),
            )?,
        };
        let (a, b) = match &args.prior_uk {
            Some(text) => parse_pair(text, "--prior-uk")?,
            None => file.prior_uk.map_or(prior, |[a, b]| (a, b)),
        };
        let grid_points = args.grid_points.or(file.grid_points).unwrap_or(DEFAULT_GRID_POINTS);
        let prior = PriorSpec::new(kelvin_from_micro(a), kelvin_from_micro(b), grid_points)?;
        let lambda = match args.lambda.or(file.lambda) {
            Some(l) => LambdaSource::Explicit(l),
            None => LambdaSource::Preset(lambda),
        };
        let grid = TimeGrid::uniform_micros(
            args.t_min_us.or(file.t_min_us).unwrap_or(2.0),
            args.t_max_us.or(file.t_max_us).unwrap_or(200.0),
            args.t_step_us.or(file.t_step_us).unwrap_or(2.0),
        )?;
        let format = if args.json { Some(Format::Json) } else { args.format.or(file.format) };
        Ok(Self {
            trap,
            prior,
            single_atom: args.single_atom || file.single_atom.unwrap_or(false),
            lambda,
            calibration: args.calibration.clone().or(file.calibration.clone()),
            cap: args.cap.or(file.cap).unwrap_or(DEFAULT_ATOM_CAP),
            grid,
            seed: args.seed.or(file.seed).unwrap_or(0),
            format,
            output: args.output.clone(),
        })
    }

    fn calibration_lambda(&self) -> Result<Option<f64>> {
        let Some(path) = &self.calibration else {
            return Ok(None);
        };
        let record = load_record(path)?;
        record
            .calibration_mean()
            .map(Some)
            .ok_or_else(|| Error::Calibration(format!("{} has no t_us = 0 rows", path.display())))
    }

    /// λ for synthetic work: flag, calibration file, then preset.
    pub fn lambda(&self) -> Result<f64> {
        match self.lambda {
            LambdaSource::Explicit(l) => Ok(l),
            LambdaSource::Preset(l) => Ok(self.calibration_lambda()?.unwrap_or(l)),
        }
    }

    /// λ for measured data: flag, calibration file, then the record's own
    /// calibration rows. Presets are never used here.
    pub fn lambda_for(&self, record: &MeasurementRecord) -> Result<f64> {
        if let LambdaSource::Explicit(l) = self.lambda {
            return Ok(l);
        }
        if let Some(l) = self.calibration_lambda()? {
            return Ok(l);
        }
        record.calibration_mean().ok_or_else(|| {
            Error::Calibration("mean loading unknown: pass --lambda, --calibration or include t_us = 0 rows".into())
        })
    }

    pub fn model(&self) -> Result<LikelihoodModel> {
        if self.single_atom {
            LikelihoodModel::single_atom(self.trap)
        } else {
            LikelihoodModel::multi_atom(self.trap, self.lambda()?, self.cap)
        }
    }

    pub fn model_for(&self, record: &MeasurementRecord) -> Result<LikelihoodModel> {
        if self.single_atom {
            LikelihoodModel::single_atom(self.trap)
        } else {
            LikelihoodModel::multi_atom(self.trap, self.lambda_for(record)?, self.cap)
        }
    }
}
