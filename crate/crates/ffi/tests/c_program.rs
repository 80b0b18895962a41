//! Compiles a C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Built static library: next to the test binary in `deps/` during `cargo
/// test`, or one level up after `cargo build`.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let found = [Some(deps), deps.parent()]
        .into_iter()
        .flatten()
        .map(|d: &Path| d.join("libtweezer_thermo_ffi.a"))
        .find(|p| p.exists());
    found.unwrap_or_else(|| panic!("libtweezer_thermo_ffi.a not found near {}", deps.display()))
}

fn cc() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_is_valid_c_and_cxx() {
    let header = manifest().join("include/tweezer_thermo.h");
    for (lang, std) in [("c", "-std=c99"), ("c++", "-std=c++11")] {
        let status = Command::new(cc())
            .args(["-fsyntax-only", "-Wall", "-Werror", "-pedantic", std, "-x", lang])
            .arg(&header)
            .status()
            .expect("run C compiler");
        assert!(status.success(), "{lang} compile of header failed");
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib = static_lib();
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("session");
    let status = Command::new(cc())
        .args(["-std=c99", "-D_DEFAULT_SOURCE", "-Wall", "-Werror", "-I"])
        .arg(manifest().join("include"))
        .arg(manifest().join("tests/c/session.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("run C compiler");
    assert!(status.success(), "C build failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let values: Vec<f64> = text.split_whitespace().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 2);
}
