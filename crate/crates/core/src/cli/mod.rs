//! Command-line front end. [`run`] takes explicit streams so it can be
//! driven from tests.

mod args;
mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command, CommonArgs, Format, StudyKind, TrapPreset};
pub use config::{ConfigFile, Settings, CONFIG_ENV};

use crate::error::{Error, Result};
use output::format_for_path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Parses `argv` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(argv: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, stdin, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn config_file() -> Result<ConfigFile> {
    match std::env::var_os(CONFIG_ENV) {
        Some(path) if !path.is_empty() => ConfigFile::load(&PathBuf::from(path)),
        _ => Ok(ConfigFile::default()),
    }
}

fn execute(cli: &Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let settings = Settings::resolve(&cli.common, &config_file()?)?;
    let format = match (&settings.output, settings.format) {
        (_, Some(f)) => f,
        (Some(path), None) => format_for_path(path),
        (None, None) => Format::Text,
    };
    let report = match &cli.command {
        Command::Estimate { record, trace, lambda_range } => {
            commands::estimate(&settings, record, *trace, lambda_range.as_deref())?
        }
        Command::Fit { record, fix_lambda } => commands::fit(&settings, record, *fix_lambda)?,
        Command::OptimalTime => commands::optimal_time(&settings)?,
        Command::Adapt { simulate, shots, a_priori, record_out } => {
            let opts = commands::AdaptOptions {
                simulate: *simulate,
                shots: *shots,
                a_priori: *a_priori,
                record_out: record_out.as_deref(),
            };
            // keep stdout machine-readable when it carries JSON or CSV
            let streaming_to_stdout = settings.output.is_none() && format != Format::Text;
            if streaming_to_stdout {
                commands::adapt(&settings, &opts, stdin, stderr, &mut std::io::sink(), false)?
            } else {
                commands::adapt(&settings, &opts, stdin, stdout, stderr, true)?
            }
        }
        Command::Simulate { study, protocols, runs, temperature_uk, ks, known_lambda } => {
            let opts = commands::StudyOptions {
                kind: *study,
                protocols,
                runs: *runs,
                temperature_uk: *temperature_uk,
                ks,
                known_lambda: *known_lambda,
            };
            commands::simulate(&settings, &opts)?
        }
        Command::Calibrate { counts, peaks, calibration_only, record_out } => {
            commands::calibrate(&settings, counts, *peaks, *calibration_only, record_out.as_deref())?
        }
        Command::ValidateModel { temperatures_uk, times_us, trajectories, planar, gravity_axis, keep_untrapped } => {
            let opts = commands::ValidateOptions {
                temperatures_uk,
                times_us,
                trajectories: *trajectories,
                planar: *planar,
                gravity_axis: *gravity_axis,
                keep_untrapped: *keep_untrapped,
            };
            commands::validate_model(&settings, &opts)?
        }
        Command::Replay { record, order } => commands::replay(&settings, record, *order)?,
        Command::Serve { port, host, state } => {
            let addr = format!("{host}:{port}");
            return crate::service::serve_blocking(&addr, state.clone(), stderr);
        }
    };
    let rendered = report.render(format)?;
    match &settings.output {
        Some(path) => {
            std::fs::write(path, rendered).map_err(Error::Io)?;
        }
        None => stdout.write_all(rendered.as_bytes())?,
    }
    Ok(())
}
