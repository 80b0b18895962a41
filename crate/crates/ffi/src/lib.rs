//! C ABI over the adaptive thermometry session and the recapture model.
//!
//! Every function returns a [`TtStatus`]. On failure the message is kept in
//! thread-local storage and read with [`tt_last_error_message`]. Sessions are
//! opaque; create them with [`tt_session_new`] and release them with
//! [`tt_session_free`]. Temperatures are in µK and times in µs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tweezer_thermo::ingest::load_record;
use tweezer_thermo::physics::{lambert_w0, recapture_fraction, RecaptureQuery, TrapConfig};
use tweezer_thermo::protocols::{run_unoptimised, AdaptiveSession};
use tweezer_thermo::service::{PolicyName, Preset, SessionConfig, SessionRequest};
use tweezer_thermo::units::{kelvin_from_micro, metres_from_micro, micro_from_kelvin, micro_from_seconds, seconds_from_micro};
use tweezer_thermo::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    InvalidOutcome = 3,
    DegeneratePosterior = 4,
    NothingToUndo = 5,
    Io = 6,
    Parse = 7,
    EmptyRecord = 8,
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtPreset {
    Deep = 0,
    Shallow = 1,
}

/// Session parameters. Fill with [`tt_config_preset`] and adjust fields.
/// `lambda` is ignored when `single_atom` is nonzero.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TtConfig {
    pub depth_uk: f64,
    pub waist_um: f64,
    pub prior_min_uk: f64,
    pub prior_max_uk: f64,
    pub grid_points: u32,
    pub single_atom: i32,
    pub lambda: f64,
    pub cap: u32,
    pub t_min_us: f64,
    pub t_max_us: f64,
    pub t_step_us: f64,
    /// Nonzero keeps the release time fixed at the first recommendation.
    pub a_priori: i32,
}

pub struct TtSession {
    inner: AdaptiveSession,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn fail(status: TtStatus, message: &str) -> TtStatus {
    set_error(message);
    status
}

fn status_of(e: &Error) -> TtStatus {
    match e {
        Error::Domain(_) | Error::Calibration(_) | Error::Fit(_) => TtStatus::InvalidArgument,
        Error::InvalidOutcome { .. } => TtStatus::InvalidOutcome,
        Error::DegeneratePosterior => TtStatus::DegeneratePosterior,
        Error::Parse { .. } | Error::Json(_) => TtStatus::Parse,
        Error::EmptyRecord => TtStatus::EmptyRecord,
        Error::Io(_) => TtStatus::Io,
        Error::OutcomeSource(_) => TtStatus::Internal,
    }
}

fn from_error(e: Error) -> TtStatus {
    fail(status_of(&e), &e.to_string())
}

/// Runs `body`, turning panics into [`TtStatus::Internal`].
fn guard(body: impl FnOnce() -> TtStatus) -> TtStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(TtStatus::Internal, &format!("panic: {msg}"))
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(TtStatus::NullArgument, concat!(stringify!($p), " is null"));
        })+
    };
}

fn request_of(c: &TtConfig) -> SessionRequest {
    let single = c.single_atom != 0;
    SessionRequest {
        trap: None,
        depth_uk: Some(c.depth_uk),
        waist_um: Some(c.waist_um),
        prior_uk: Some([c.prior_min_uk, c.prior_max_uk]),
        grid_points: Some(c.grid_points as usize),
        single_atom: Some(single),
        lambda: if single { None } else { Some(c.lambda) },
        cap: Some(c.cap),
        t_min_us: Some(c.t_min_us),
        t_max_us: Some(c.t_max_us),
        t_step_us: Some(c.t_step_us),
        policy: Some(if c.a_priori != 0 { PolicyName::APriori } else { PolicyName::Adaptive }),
    }
}

fn resolve(c: &TtConfig) -> Result<SessionConfig, TtStatus> {
    request_of(c).resolve().map_err(|fields| {
        let text: Vec<String> = fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
        fail(TtStatus::InvalidArgument, &text.join("; "))
    })
}

fn trap_of(depth_uk: f64, waist_um: f64) -> Result<TrapConfig, Error> {
    match (depth_uk, waist_um) {
        (290.0, 1.971) => Ok(TrapConfig::deep()),
        (110.0, 1.971) => Ok(TrapConfig::shallow()),
        (d, w) => TrapConfig::potassium(kelvin_from_micro(d), metres_from_micro(w)),
    }
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Principal branch of the Lambert W function for `x >= -1/e`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn tt_lambert_w0(x: f64, out: *mut f64) -> TtStatus {
    guard(|| {
        non_null!(out);
        match lambert_w0(x) {
            Ok(w) => {
                *out = w;
                TtStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fraction of atoms recaptured after release for `t_us` at `temperature_uk`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn tt_recapture_fraction(
    depth_uk: f64,
    waist_um: f64,
    temperature_uk: f64,
    t_us: f64,
    out: *mut f64,
) -> TtStatus {
    guard(|| {
        non_null!(out);
        let result = trap_of(depth_uk, waist_um).and_then(|trap| {
            let q = RecaptureQuery::new(kelvin_from_micro(temperature_uk), seconds_from_micro(t_us))?;
            Ok(recapture_fraction(&trap, q))
        });
        match result {
            Ok(f) => {
                *out = f;
                TtStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Default parameters for a trap preset.
///
/// # Safety
/// `out` must be null or point to a writable `TtConfig`.
#[no_mangle]
pub unsafe extern "C" fn tt_config_preset(preset: TtPreset, out: *mut TtConfig) -> TtStatus {
    guard(|| {
        non_null!(out);
        let trap = match preset {
            TtPreset::Deep => Preset::Deep,
            TtPreset::Shallow => Preset::Shallow,
        };
        let req = SessionRequest { trap: Some(trap), ..Default::default() };
        let c = match req.resolve() {
            Ok(c) => c,
            Err(_) => return fail(TtStatus::Internal, "preset failed to resolve"),
        };
        *out = TtConfig {
            depth_uk: c.depth_uk,
            waist_um: c.waist_um,
            prior_min_uk: c.prior_uk[0],
            prior_max_uk: c.prior_uk[1],
            grid_points: c.grid_points as u32,
            single_atom: c.single_atom as i32,
            lambda: c.lambda.unwrap_or(f64::NAN),
            cap: c.cap,
            t_min_us: c.t_min_us,
            t_max_us: c.t_max_us,
            t_step_us: c.t_step_us,
            a_priori: (c.policy == PolicyName::APriori) as i32,
        };
        TtStatus::Ok
    })
}

/// Creates a session and stores it in `*out`. On failure `*out` is null.
///
/// # Safety
/// `config` must be null or point to a valid `TtConfig`; `out` must be null
/// or point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tt_session_new(config: *const TtConfig, out: *mut *mut TtSession) -> TtStatus {
    guard(|| {
        non_null!(config, out);
        *out = ptr::null_mut();
        let resolved = match resolve(&*config) {
            Ok(c) => c,
            Err(status) => return status,
        };
        match resolved.build() {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(TtSession { inner }));
                TtStatus::Ok
            }
            Err(fields) => {
                let text: Vec<String> = fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
                fail(TtStatus::InvalidArgument, &text.join("; "))
            }
        }
    })
}

/// Releases a session. Null is accepted.
///
/// # Safety
/// `session` must be null or a pointer from [`tt_session_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn tt_session_free(session: *mut TtSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Recommended release time for the next shot, in µs.
///
/// # Safety
/// `session` must be null or a live session; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tt_session_next_time_us(session: *const TtSession, out: *mut f64) -> TtStatus {
    guard(|| {
        non_null!(session, out);
        *out = micro_from_seconds((*session).inner.next_time());
        TtStatus::Ok
    })
}

/// Records `n` atoms recaptured after a release of `t_us`. Any release time
/// is accepted; pass the recommendation to follow the adaptive schedule.
///
/// # Safety
/// `session` must be null or a live session not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn tt_session_submit(session: *mut TtSession, t_us: f64, n: i64) -> TtStatus {
    guard(|| {
        non_null!(session);
        if !t_us.is_finite() || t_us < 0.0 {
            return fail(TtStatus::InvalidArgument, "release time must be finite and nonnegative");
        }
        match (*session).inner.submit(seconds_from_micro(t_us), n) {
            Ok(_) => TtStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Removes the last shot. Fails with [`TtStatus::NothingToUndo`] when empty.
///
/// # Safety
/// `session` must be null or a live session not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn tt_session_undo(session: *mut TtSession) -> TtStatus {
    guard(|| {
        non_null!(session);
        match (*session).inner.undo() {
            Ok(Some(_)) => TtStatus::Ok,
            Ok(None) => fail(TtStatus::NothingToUndo, "no shot to undo"),
            Err(e) => from_error(e),
        }
    })
}

/// Number of recorded shots.
///
/// # Safety
/// `session` must be null or a live session; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn tt_session_shots(session: *const TtSession, out: *mut usize) -> TtStatus {
    guard(|| {
        non_null!(session, out);
        *out = (*session).inner.shots();
        TtStatus::Ok
    })
}

/// Current estimate and error bar in µK.
///
/// # Safety
/// `session` must be null or a live session; outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn tt_session_estimate(
    session: *const TtSession,
    estimate_uk: *mut f64,
    delta_uk: *mut f64,
) -> TtStatus {
    guard(|| {
        non_null!(session, estimate_uk, delta_uk);
        let bar = (*session).inner.estimate();
        *estimate_uk = micro_from_kelvin(bar.estimate);
        *delta_uk = micro_from_kelvin(bar.delta);
        TtStatus::Ok
    })
}

/// Estimates the temperature of a stored record (CSV, or JSON by extension)
/// under `config`. Time and policy fields of `config` are not used.
///
/// # Safety
/// `config` and `path` must be null or valid (`path` NUL-terminated);
/// outputs null or writable.
#[no_mangle]
pub unsafe extern "C" fn tt_estimate_record(
    config: *const TtConfig,
    path: *const c_char,
    estimate_uk: *mut f64,
    delta_uk: *mut f64,
) -> TtStatus {
    guard(|| {
        non_null!(config, path, estimate_uk, delta_uk);
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(TtStatus::InvalidArgument, "path is not UTF-8");
        };
        let resolved = match resolve(&*config) {
            Ok(c) => c,
            Err(status) => return status,
        };
        let session = match resolved.build() {
            Ok(s) => s,
            Err(fields) => return fail(TtStatus::InvalidArgument, &fields[0].message),
        };
        let result = load_record(path).and_then(|record| run_unoptimised(&record, session.prior_spec(), session.model()));
        match result {
            Ok(run) => {
                let bar = run.result;
                *estimate_uk = micro_from_kelvin(bar.estimate);
                *delta_uk = micro_from_kelvin(bar.delta);
                TtStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
