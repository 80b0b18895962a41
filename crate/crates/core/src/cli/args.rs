use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::protocols::ReplayOrder;
use crate::simulation::Protocol;

const AFTER_HELP: &str = "\
Units: temperatures in µK, times in µs, waists in µm.

Record files (CSV): optional `# key: value` metadata lines (`# trap: <id>`),
then the header `t_us,atoms`, one row per shot. Rows with t_us = 0 are
calibration shots used to estimate the mean loading λ. Raw camera files use
the header `t_us,photons` and go through `calibrate` first. Files ending in
.json use the JSON record schema {trap_id, labels, calibration, shots:
[{t_us, atoms}]}.

Defaults: TWEEZER_THERMO_CONFIG may name a JSON file whose keys (trap,
depth_uk, waist_um, prior_uk, lambda, cap, grid_points, t_min_us, t_max_us,
t_step_us, seed, format, single_atom) replace the built-in defaults.
Command-line flags take precedence.";

#[derive(Debug, Parser)]
#[command(name = "tweezer-thermo", version, about = "Release-recapture thermometry of atoms in optical tweezers")]
#[command(after_help = AFTER_HELP)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrapPreset {
    /// 290 µK, 1.971 µm, prior 14.5:125 µK, λ = 1.65
    Deep,
    /// 110 µK, 1.971 µm, prior 5.5:30 µK, λ = 1.88
    Shallow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Trap preset; explicit depth, waist, prior and λ flags override it
    #[arg(long, global = true, value_enum)]
    pub trap: Option<TrapPreset>,
    /// Trap depth U0/k_B in µK
    #[arg(long, global = true)]
    pub depth_uk: Option<f64>,
    /// Beam waist in µm
    #[arg(long, global = true)]
    pub waist_um: Option<f64>,
    /// Prior support `min:max` in µK
    #[arg(long, global = true, value_name = "MIN:MAX")]
    pub prior_uk: Option<String>,
    /// Hypothesis grid points
    #[arg(long, global = true)]
    pub grid_points: Option<usize>,
    /// Exactly one atom per shot (Bernoulli outcomes)
    #[arg(long, global = true)]
    pub single_atom: bool,
    /// Mean loading λ
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Record whose t_us = 0 rows set λ
    #[arg(long, global = true, value_name = "PATH")]
    pub calibration: Option<PathBuf>,
    /// Largest atom number per shot
    #[arg(long, global = true)]
    pub cap: Option<u32>,
    /// First candidate release time, µs
    #[arg(long, global = true)]
    pub t_min_us: Option<f64>,
    /// Last candidate release time, µs
    #[arg(long, global = true)]
    pub t_max_us: Option<f64>,
    /// Candidate release time step, µs
    #[arg(long, global = true)]
    pub t_step_us: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Shorthand for --format json
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the result here instead of stdout; format follows the extension
    /// unless --format or --json is given
    #[arg(long, short, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    /// Relative error of repeated 210-shot experiments per protocol
    Variability,
    /// Variability against shot number and its power-law fit
    Convergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Axial,
    Radial,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bayesian estimate from a record, shots processed in recorded order
    Estimate {
        record: PathBuf,
        /// Include the estimate after every shot
        #[arg(long)]
        trace: bool,
        /// Infer λ jointly over `min:max:points` instead of fixing it
        #[arg(long, value_name = "MIN:MAX:N")]
        lambda_range: Option<String>,
    },
    /// Least-squares fit of mean atom number against release time
    Fit {
        record: PathBuf,
        /// Hold λ at its calibrated value and fit T alone
        #[arg(long)]
        fix_lambda: bool,
    },
    /// Release time maximising the information gain under the prior
    OptimalTime,
    /// Adaptive session: prints the next release time and reads outcomes
    Adapt {
        /// Answer from the synthetic sampler at this temperature (µK)
        #[arg(long, value_name = "T_UK")]
        simulate: Option<f64>,
        /// Stop after this many shots (simulation default 210)
        #[arg(long)]
        shots: Option<usize>,
        /// Keep the prior-optimal time for every shot
        #[arg(long)]
        a_priori: bool,
        /// Save the collected record
        #[arg(long, value_name = "PATH")]
        record_out: Option<PathBuf>,
    },
    /// Repeated synthetic experiments
    Simulate {
        #[arg(value_enum)]
        study: StudyKind,
        /// Protocols to run (repeatable); default all
        #[arg(long = "protocol", value_name = "NAME")]
        protocols: Vec<Protocol>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// True temperature, µK
        #[arg(long, default_value_t = 40.0)]
        temperature_uk: f64,
        /// Comma-separated shot numbers for the convergence study
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Use the true λ instead of re-estimating it per run
        #[arg(long)]
        known_lambda: bool,
    },
    /// Fit the photon-count histogram of a raw `t_us,photons` file
    Calibrate {
        counts: PathBuf,
        /// Peaks to fit (default cap + 1)
        #[arg(long)]
        peaks: Option<usize>,
        /// Fit only the t_us = 0 rows
        #[arg(long)]
        calibration_only: bool,
        /// Save the converted atom-number record
        #[arg(long, value_name = "PATH")]
        record_out: Option<PathBuf>,
    },
    /// Compare the closed-form recapture fraction with trajectory Monte-Carlo
    ValidateModel {
        /// Comma-separated temperatures, µK
        #[arg(long, value_delimiter = ',')]
        temperatures_uk: Vec<f64>,
        /// Comma-separated release times, µs
        #[arg(long, value_delimiter = ',', default_value = "10,20,35,60")]
        times_us: Vec<f64>,
        #[arg(long, default_value_t = 5000)]
        trajectories: usize,
        /// Radial motion only, no gravity
        #[arg(long)]
        planar: bool,
        #[arg(long, value_enum, default_value_t = AxisArg::Axial)]
        gravity_axis: AxisArg,
        /// Keep initially untrapped samples instead of redrawing them
        #[arg(long)]
        keep_untrapped: bool,
    },
    /// Reprocess a record ordered by distance to the optimal time
    Replay {
        record: PathBuf,
        #[arg(long, default_value = "nearest")]
        order: ReplayOrder,
    },
    /// Serve the session HTTP API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Load sessions from and save them to this JSON file
        #[arg(long, value_name = "PATH")]
        state: Option<PathBuf>,
    },
}
