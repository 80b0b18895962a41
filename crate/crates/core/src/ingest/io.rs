//! CSV and JSON record files.
//!
//! CSV: optional `# key: value` lines, then a header `t_us,atoms` (or
//! `t_us,photons` for raw camera counts), then one row per shot. Rows with
//! `t_us = 0` are calibration shots. The `trap` key fills the trap id; other
//! keys are kept as labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::{MeasurementRecord, RecordMetadata, Shot};
use crate::units::{format_micros, micro_from_seconds, seconds_from_micro};

use super::calibration::{map_photon_counts, CalibrationFit, MappingDiagnostics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Atoms,
    Photons,
}

struct Parsed {
    metadata: RecordMetadata,
    column: Column,
    rows: Vec<(usize, f64, i64)>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_csv(text: &str) -> Result<Parsed> {
    if text.trim().is_empty() {
        return Err(parse_error(1, "empty record"));
    }
    let mut metadata = RecordMetadata::default();
    let mut body_start = 0;
    let mut skipped = 0;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once(':') {
                let (key, value) = (key.trim().to_string(), value.trim().to_string());
                if key == "trap" {
                    metadata.trap_id = Some(value);
                } else if !key.is_empty() {
                    metadata.labels.insert(key, value);
                }
            }
        } else if !trimmed.is_empty() {
            break;
        }
        body_start += line.len() + 1;
        skipped += 1;
    }
    let body = text.get(body_start..).unwrap_or("");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header_line = skipped + 1;
    let headers = reader.headers().map_err(|e| parse_error(header_line, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let column = match names.as_slice() {
        ["t_us", "atoms"] => Column::Atoms,
        ["t_us", "photons"] => Column::Photons,
        [] | [""] => return Err(parse_error(header_line, "empty record")),
        _ => {
            return Err(parse_error(
                header_line,
                format!("expected header `t_us,atoms` or `t_us,photons`, found `{}`", names.join(",")),
            ))
        }
    };
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize) + skipped;
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize) + skipped;
        if record.len() != 2 {
            return Err(parse_error(line, format!("expected 2 fields, found {}", record.len())));
        }
        let t_us: f64 = record[0]
            .parse()
            .map_err(|_| parse_error(line, format!("invalid release time `{}`", &record[0])))?;
        if !(t_us.is_finite() && t_us >= 0.0) {
            return Err(parse_error(line, format!("release time must be nonnegative, got `{}`", &record[0])));
        }
        let value: i64 = record[1]
            .parse()
            .map_err(|_| parse_error(line, format!("invalid count `{}`", &record[1])))?;
        if column == Column::Atoms && !(0..=u32::MAX as i64).contains(&value) {
            return Err(parse_error(line, format!("atom number must be nonnegative, got {value}")));
        }
        rows.push((line, t_us, value));
    }
    Ok(Parsed { metadata, column, rows })
}

/// Parses an atom-number CSV record.
pub fn parse_record_csv(text: &str) -> Result<MeasurementRecord> {
    let parsed = parse_csv(text)?;
    if parsed.column == Column::Photons {
        return Err(parse_error(1, "file holds raw photon counts; calibrate it first"));
    }
    let mut record = MeasurementRecord { metadata: parsed.metadata, ..Default::default() };
    for (_, t_us, atoms) in parsed.rows {
        if t_us == 0.0 {
            record.calibration.push(atoms as u32);
        } else {
            record.shots.push(Shot { time: seconds_from_micro(t_us), atoms: atoms as u32 });
        }
    }
    Ok(record)
}

/// Writes calibration rows first, then shots in recorded order.
///
/// Shots taken at zero release time are indistinguishable from calibration
/// in this format; use JSON to keep them apart.
pub fn record_to_csv(record: &MeasurementRecord) -> String {
    let mut out = String::new();
    if let Some(trap) = &record.metadata.trap_id {
        out.push_str(&format!("# trap: {trap}\n"));
    }
    for (key, value) in &record.metadata.labels {
        out.push_str(&format!("# {key}: {value}\n"));
    }
    out.push_str("t_us,atoms\n");
    for n in &record.calibration {
        out.push_str(&format!("0,{n}\n"));
    }
    for shot in &record.shots {
        out.push_str(&format!("{},{}\n", format_micros(shot.time), shot.atoms));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRow {
    pub t_us: f64,
    pub atoms: u32,
}

/// JSON form of a record, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub calibration: Vec<u32>,
    #[serde(default)]
    pub shots: Vec<ShotRow>,
}

impl From<&MeasurementRecord> for RecordFile {
    fn from(record: &MeasurementRecord) -> Self {
        Self {
            trap_id: record.metadata.trap_id.clone(),
            labels: record.metadata.labels.clone(),
            calibration: record.calibration.clone(),
            shots: record
                .shots
                .iter()
                .map(|s| ShotRow { t_us: micro_from_seconds(s.time), atoms: s.atoms })
                .collect(),
        }
    }
}

impl RecordFile {
    pub fn into_record(self) -> Result<MeasurementRecord> {
        let shots = self
            .shots
            .iter()
            .map(|row| Shot::new(seconds_from_micro(row.t_us), row.atoms))
            .collect::<Result<Vec<_>>>()?;
        let mut record = MeasurementRecord::new(shots, self.calibration)?;
        record.metadata = RecordMetadata { trap_id: self.trap_id, labels: self.labels };
        Ok(record)
    }
}

pub fn record_to_json(record: &MeasurementRecord) -> Result<String> {
    Ok(serde_json::to_string_pretty(&RecordFile::from(record))?)
}

pub fn record_from_json(text: &str) -> Result<MeasurementRecord> {
    serde_json::from_str::<RecordFile>(text)?.into_record()
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Loads a record; `.json` files use the JSON schema, anything else CSV.
pub fn load_record(path: impl AsRef<Path>) -> Result<MeasurementRecord> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    if is_json(path) {
        record_from_json(&text)
    } else {
        parse_record_csv(&text)
    }
}

pub fn save_record(record: &MeasurementRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) { record_to_json(record)? } else { record_to_csv(record) };
    fs::write(path, text)?;
    Ok(())
}

/// Raw camera counts per shot, before calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawShotFile {
    pub metadata: RecordMetadata,
    /// (release time in seconds, photon count)
    pub rows: Vec<(f64, i64)>,
}

impl RawShotFile {
    /// Photon counts of the zero-release rows.
    pub fn calibration_counts(&self) -> Vec<i64> {
        self.rows.iter().filter(|r| r.0 == 0.0).map(|r| r.1).collect()
    }

    pub fn counts(&self) -> Vec<i64> {
        self.rows.iter().map(|r| r.1).collect()
    }

    /// Maps every row to an atom number by its nearest calibration peak.
    pub fn to_record(&self, calib: &CalibrationFit, cap: u32) -> (MeasurementRecord, MappingDiagnostics) {
        let (atoms, diag) = map_photon_counts(&self.counts(), calib, cap);
        let mut record = MeasurementRecord { metadata: self.metadata.clone(), ..Default::default() };
        for (&(time, _), n) in self.rows.iter().zip(atoms) {
            if time == 0.0 {
                record.calibration.push(n);
            } else {
                record.shots.push(Shot { time, atoms: n });
            }
        }
        (record, diag)
    }
}

/// Parses a `t_us,photons` CSV file.
pub fn parse_raw_csv(text: &str) -> Result<RawShotFile> {
    let parsed = parse_csv(text)?;
    if parsed.column == Column::Atoms {
        return Err(parse_error(1, "file holds atom numbers, not photon counts"));
    }
    let rows = parsed.rows.into_iter().map(|(_, t_us, n)| (seconds_from_micro(t_us), n)).collect();
    Ok(RawShotFile { metadata: parsed.metadata, rows })
}

pub fn load_raw_shots(path: impl AsRef<Path>) -> Result<RawShotFile> {
    parse_raw_csv(&fs::read_to_string(path)?)
}
