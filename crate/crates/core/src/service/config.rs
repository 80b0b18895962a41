//! Session configuration as sent by clients, in µK, µm and µs.

use serde::{Deserialize, Serialize};

use crate::inference::{PriorSpec, TimeGrid, DEFAULT_GRID_POINTS};
use crate::physics::{LikelihoodModel, TrapConfig, DEFAULT_ATOM_CAP};
use crate::protocols::AdaptiveSession;
use crate::units::{kelvin_from_micro, metres_from_micro};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Deep,
    Shallow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    #[default]
    Adaptive,
    APriori,
}

/// Request body of `POST /api/sessions`; every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub trap: Option<Preset>,
    pub depth_uk: Option<f64>,
    pub waist_um: Option<f64>,
    pub prior_uk: Option<[f64; 2]>,
    pub grid_points: Option<usize>,
    pub single_atom: Option<bool>,
    pub lambda: Option<f64>,
    pub cap: Option<u32>,
    pub t_min_us: Option<f64>,
    pub t_max_us: Option<f64>,
    pub t_step_us: Option<f64>,
    pub policy: Option<PolicyName>,
}

/// Fully resolved configuration, echoed back to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub depth_uk: f64,
    pub waist_um: f64,
    pub prior_uk: [f64; 2],
    pub grid_points: usize,
    pub single_atom: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub cap: u32,
    pub t_min_us: f64,
    pub t_max_us: f64,
    pub t_step_us: f64,
    pub policy: PolicyName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

fn positive(errors: &mut Vec<FieldError>, field: &str, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        errors.push(FieldError::new(field, format!("must be positive and finite, got {value}")));
    }
}

impl SessionRequest {
    pub fn resolve(&self) -> Result<SessionConfig, Vec<FieldError>> {
        let (depth, prior, lambda) = match self.trap.unwrap_or(Preset::Deep) {
            Preset::Deep => (290.0, [14.5, 125.0], 1.65),
            Preset::Shallow => (110.0, [5.5, 30.0], 1.88),
        };
        let single_atom = self.single_atom.unwrap_or(false);
        let cfg = SessionConfig {
            depth_uk: self.depth_uk.unwrap_or(depth),
            waist_um: self.waist_um.unwrap_or(1.971),
            prior_uk: self.prior_uk.unwrap_or(prior),
            grid_points: self.grid_points.unwrap_or(DEFAULT_GRID_POINTS),
            single_atom,
            lambda: if single_atom { None } else { Some(self.lambda.unwrap_or(lambda)) },
            cap: self.cap.unwrap_or(DEFAULT_ATOM_CAP),
            t_min_us: self.t_min_us.unwrap_or(2.0),
            t_max_us: self.t_max_us.unwrap_or(200.0),
            t_step_us: self.t_step_us.unwrap_or(2.0),
            policy: self.policy.unwrap_or_default(),
        };
        let mut errors = Vec::new();
        positive(&mut errors, "depth_uk", cfg.depth_uk);
        positive(&mut errors, "waist_um", cfg.waist_um);
        let [a, b] = cfg.prior_uk;
        if !(a.is_finite() && a > 0.0) {
            errors.push(FieldError::new("prior_uk", format!("minimum must be positive, got {a}")));
        } else if !(b.is_finite() && b > a) {
            errors.push(FieldError::new("prior_uk", format!("maximum ({b}) must exceed minimum ({a})")));
        }
        if cfg.grid_points < 3 {
            errors.push(FieldError::new("grid_points", format!("need at least 3 points, got {}", cfg.grid_points)));
        }
        if let Some(l) = cfg.lambda {
            positive(&mut errors, "lambda", l);
        }
        if !single_atom && cfg.cap == 0 {
            errors.push(FieldError::new("cap", "must be at least 1"));
        }
        positive(&mut errors, "t_min_us", cfg.t_min_us);
        positive(&mut errors, "t_step_us", cfg.t_step_us);
        if !(cfg.t_max_us.is_finite() && cfg.t_max_us >= cfg.t_min_us) {
            errors.push(FieldError::new("t_max_us", format!("must be at least t_min_us, got {}", cfg.t_max_us)));
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(errors)
        }
    }
}

impl SessionConfig {
    /// Builds the session; remaining library-level rejections are reported
    /// against the whole config.
    pub fn build(&self) -> Result<AdaptiveSession, Vec<FieldError>> {
        let wrap = |field: &str| {
            let field = field.to_string();
            move |e: crate::Error| vec![FieldError { field: field.clone(), message: e.to_string() }]
        };
        // preset values map to the preset constructors bit for bit
        let trap = match (self.depth_uk, self.waist_um) {
            (290.0, 1.971) => TrapConfig::deep(),
            (110.0, 1.971) => TrapConfig::shallow(),
            (d, w) => TrapConfig::potassium(kelvin_from_micro(d), metres_from_micro(w)).map_err(wrap("depth_uk"))?,
        };
        let spec = PriorSpec::new(kelvin_from_micro(self.prior_uk[0]), kelvin_from_micro(self.prior_uk[1]), self.grid_points)
            .map_err(wrap("prior_uk"))?;
        let model = match self.lambda {
            None => LikelihoodModel::single_atom(trap),
            Some(l) => LikelihoodModel::multi_atom(trap, l, self.cap),
        }
        .map_err(wrap("lambda"))?;
        let grid = TimeGrid::uniform_micros(self.t_min_us, self.t_max_us, self.t_step_us).map_err(wrap("t_min_us"))?;
        match self.policy {
            PolicyName::Adaptive => AdaptiveSession::new(spec, model, grid, crate::protocols::TimePolicy::Adaptive),
            PolicyName::APriori => AdaptiveSession::a_priori(spec, model, grid),
        }
        .map_err(wrap("config"))
    }
}
