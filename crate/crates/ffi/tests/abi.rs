use std::ffi::{CStr, CString};
use std::ptr;

use tweezer_thermo::physics::{lambert_w0, recapture_fraction, RecaptureQuery, TrapConfig};
use tweezer_thermo::protocols::AdaptiveSession;
use tweezer_thermo::service::SessionRequest;
use tweezer_thermo_ffi::*;

fn deep() -> TtConfig {
    let mut c = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { tt_config_preset(TtPreset::Deep, c.as_mut_ptr()) }, TtStatus::Ok);
    unsafe { c.assume_init() }
}

fn new_session(c: &TtConfig) -> *mut TtSession {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tt_session_new(c, &mut s) }, TtStatus::Ok);
    s
}

fn last_error() -> String {
    let p = tt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn library_session() -> AdaptiveSession {
    SessionRequest::default().resolve().unwrap().build().unwrap()
}

#[test]
fn physics_matches_library() {
    let mut w = 0.0;
    assert_eq!(unsafe { tt_lambert_w0(1.0, &mut w) }, TtStatus::Ok);
    assert_eq!(w, lambert_w0(1.0).unwrap());
    assert_eq!(unsafe { tt_lambert_w0(-1.0, &mut w) }, TtStatus::InvalidArgument);
    assert!(!last_error().is_empty());

    let mut f = 0.0;
    assert_eq!(unsafe { tt_recapture_fraction(290.0, 1.971, 40.0, 22.0, &mut f) }, TtStatus::Ok);
    let q = RecaptureQuery::new(40e-6, 22e-6).unwrap();
    assert_eq!(f, recapture_fraction(&TrapConfig::deep(), q));
    assert_eq!(unsafe { tt_recapture_fraction(290.0, 1.971, -1.0, 22.0, &mut f) }, TtStatus::InvalidArgument);
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { tt_lambert_w0(1.0, ptr::null_mut()) }, TtStatus::NullArgument);
    assert_eq!(last_error(), "out is null");
    assert_eq!(unsafe { tt_session_new(ptr::null(), ptr::null_mut()) }, TtStatus::NullArgument);
    assert_eq!(unsafe { tt_session_submit(ptr::null_mut(), 22.0, 1) }, TtStatus::NullArgument);
    unsafe { tt_session_free(ptr::null_mut()) };
    // a successful call clears the message
    let mut w = 0.0;
    assert_eq!(unsafe { tt_lambert_w0(0.0, &mut w) }, TtStatus::Ok);
    assert!(tt_last_error_message().is_null());
}

#[test]
fn presets_resolve() {
    let c = deep();
    assert_eq!((c.depth_uk, c.waist_um, c.prior_min_uk, c.prior_max_uk), (290.0, 1.971, 14.5, 125.0));
    assert_eq!((c.lambda, c.cap, c.grid_points, c.single_atom, c.a_priori), (1.65, 7, 1000, 0, 0));
    let mut s = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { tt_config_preset(TtPreset::Shallow, s.as_mut_ptr()) }, TtStatus::Ok);
    let s = unsafe { s.assume_init() };
    assert_eq!((s.depth_uk, s.prior_max_uk, s.lambda), (110.0, 30.0, 1.88));
}

#[test]
fn session_follows_library() {
    let c = deep();
    let s = new_session(&c);
    let mut lib = library_session();
    let mut t = 0.0;
    for n in [1, 2, 0, 1, 1, 3, 0, 2] {
        unsafe { tt_session_next_time_us(s, &mut t) };
        assert_eq!(t * 1e-6, lib.next_time());
        assert_eq!(unsafe { tt_session_submit(s, t, n) }, TtStatus::Ok);
        lib.submit(lib.next_time(), n).unwrap();
    }
    let (mut est, mut delta, mut shots) = (0.0, 0.0, 0usize);
    unsafe {
        tt_session_estimate(s, &mut est, &mut delta);
        tt_session_shots(s, &mut shots);
    }
    let bar = lib.estimate();
    assert_eq!(shots, 8);
    assert!((est - bar.estimate * 1e6).abs() <= 1e-12 * est);
    assert!((delta - bar.delta * 1e6).abs() <= 1e-12 * delta);

    assert_eq!(unsafe { tt_session_submit(s, 22.0, -1) }, TtStatus::InvalidOutcome);
    assert_eq!(unsafe { tt_session_submit(s, f64::NAN, 1) }, TtStatus::InvalidArgument);
    unsafe { tt_session_free(s) };
}

#[test]
fn undo_and_empty_undo() {
    let s = new_session(&deep());
    let mut first = 0.0;
    unsafe { tt_session_next_time_us(s, &mut first) };
    assert_eq!(first, 22.0);
    assert_eq!(unsafe { tt_session_undo(s) }, TtStatus::NothingToUndo);
    assert_eq!(unsafe { tt_session_submit(s, first, 2) }, TtStatus::Ok);
    assert_eq!(unsafe { tt_session_undo(s) }, TtStatus::Ok);
    let mut t = 0.0;
    unsafe { tt_session_next_time_us(s, &mut t) };
    assert_eq!(t, first);
    unsafe { tt_session_free(s) };
}

#[test]
fn single_atom_rejects_two() {
    let mut c = deep();
    c.single_atom = 1;
    let s = new_session(&c);
    let mut t = 0.0;
    unsafe { tt_session_next_time_us(s, &mut t) };
    assert_eq!(t, 14.0);
    assert_eq!(unsafe { tt_session_submit(s, t, 2) }, TtStatus::InvalidOutcome);
    unsafe { tt_session_free(s) };
}

#[test]
fn bad_config_is_invalid_argument() {
    let mut c = deep();
    c.prior_min_uk = 200.0;
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { tt_session_new(&c, &mut s) }, TtStatus::InvalidArgument);
    assert!(s.is_null());
    assert!(last_error().starts_with("prior_uk"), "{}", last_error());
}

#[test]
fn record_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    std::fs::write(&path, "t_us,atoms\n22,1\n22,2\n30,0\n").unwrap();
    let c = deep();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let (mut est, mut delta) = (0.0, 0.0);
    assert_eq!(unsafe { tt_estimate_record(&c, cpath.as_ptr(), &mut est, &mut delta) }, TtStatus::Ok);
    let mut lib = library_session();
    for (t, n) in [(22e-6, 1), (22e-6, 2), (30e-6, 0)] {
        lib.submit(t, n).unwrap();
    }
    assert!((est - lib.estimate().estimate * 1e6).abs() <= 1e-12 * est);

    std::fs::write(&path, "t_us,atoms\n").unwrap();
    assert_eq!(unsafe { tt_estimate_record(&c, cpath.as_ptr(), &mut est, &mut delta) }, TtStatus::EmptyRecord);
    std::fs::write(&path, "t_us,atoms\n22,x\n").unwrap();
    assert_eq!(unsafe { tt_estimate_record(&c, cpath.as_ptr(), &mut est, &mut delta) }, TtStatus::Parse);
    let missing = CString::new(dir.path().join("none.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { tt_estimate_record(&c, missing.as_ptr(), &mut est, &mut delta) }, TtStatus::Io);
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(tt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
