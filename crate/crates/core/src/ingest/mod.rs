//! Raw photon counts to atom-number records, and record file formats.

mod calibration;
mod io;

pub use calibration::{
    estimate_lambda, fit_calibration_histogram, map_photon_counts, photons_to_atoms, CalibrationFit,
    LambdaEstimate, MappingDiagnostics, DEFAULT_PEAKS,
};
pub use io::{
    load_raw_shots, load_record, parse_raw_csv, parse_record_csv, record_from_json, record_to_csv,
    record_to_json, save_record, RawShotFile, RecordFile, ShotRow,
};
