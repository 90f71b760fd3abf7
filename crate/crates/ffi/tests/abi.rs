use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use vcsd_ffi::*;

fn coordinate_basis(n: usize, idx: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; n * idx.len()];
    for (j, &i) in idx.iter().enumerate() {
        m[j * n + i] = 1.0;
    }
    m
}

fn last_error() -> String {
    let p = vcsd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn noiseless_stream_through_handle() {
    // target e0, clutter span{e1, e2}; samples lie in target + clutter
    let n = 6;
    let basis = coordinate_basis(n, &[0]);
    let mut params = vcsd_detector_params_default();
    params.has_noise_variance = 1;
    params.noise_variance = 0.0;
    let mut det = ptr::null_mut();
    let st = unsafe { vcsd_detector_new(basis.as_ptr(), n, 1, &params, &mut det) };
    assert_eq!(st, VcsdStatus::Ok);
    assert!(!det.is_null());

    let mut t = 0.0;
    assert_eq!(
        unsafe { vcsd_detector_latest(det, &mut t, ptr::null_mut(), ptr::null_mut()) },
        VcsdStatus::Usage
    );

    let samples = [
        [1.0, 2.0, -1.0, 0.0, 0.0, 0.0],
        [-0.5, 1.0, 3.0, 0.0, 0.0, 0.0],
        [2.0, -1.0, 0.5, 0.0, 0.0, 0.0],
    ];
    let mut decision = VcsdDecision::Undecided;
    for y in &samples {
        let st = unsafe { vcsd_detector_ingest(det, y.as_ptr(), n, &mut decision) };
        assert_eq!(st, VcsdStatus::Ok);
        if decision != VcsdDecision::Undecided {
            break;
        }
    }
    assert_eq!(decision, VcsdDecision::TargetPresent);
    let mut at = 0;
    assert_eq!(
        unsafe { vcsd_detector_decision(det, &mut at) },
        VcsdDecision::TargetPresent
    );
    assert_eq!(at, 3);
    assert_eq!(unsafe { vcsd_detector_sample_count(det) }, 3);

    let (mut inv_t, mut rank) = (0.0, 0usize);
    assert_eq!(
        unsafe { vcsd_detector_latest(det, &mut t, &mut inv_t, &mut rank) },
        VcsdStatus::Ok
    );
    assert!(t <= 1e-8 && inv_t > 1e6);
    assert_eq!(rank, 3);

    let st = unsafe { vcsd_detector_ingest(det, samples[0].as_ptr(), n, ptr::null_mut()) };
    assert_eq!(st, VcsdStatus::Usage);
    assert!(last_error().contains("already decided"));
    unsafe { vcsd_detector_free(det) };
}

#[test]
fn creation_errors_are_reported() {
    let mut det = ptr::null_mut();
    let bad = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    let st = unsafe { vcsd_detector_new(bad.as_ptr(), 3, 2, ptr::null(), &mut det) };
    assert_eq!(st, VcsdStatus::InvalidInput);
    assert!(det.is_null());
    assert!(last_error().contains("column 1"));

    let st = unsafe { vcsd_detector_new(ptr::null(), 3, 1, ptr::null(), &mut det) };
    assert_eq!(st, VcsdStatus::NullPointer);

    let basis = coordinate_basis(3, &[0]);
    let st = unsafe { vcsd_detector_new(basis.as_ptr(), 3, 1, ptr::null(), &mut det) };
    assert_eq!(st, VcsdStatus::Ok);
    let y = [1.0, 2.0];
    assert_eq!(
        unsafe { vcsd_detector_ingest(det, y.as_ptr(), 2, ptr::null_mut()) },
        VcsdStatus::DimensionMismatch
    );
    let y = [1.0, f64::NAN, 0.0];
    assert_eq!(
        unsafe { vcsd_detector_ingest(det, y.as_ptr(), 3, ptr::null_mut()) },
        VcsdStatus::NonFinite
    );
    unsafe { vcsd_detector_free(det) };
    unsafe { vcsd_detector_free(ptr::null_mut()) };
}

#[test]
fn volume_correlation_of_lines() {
    let a = [1.0, 0.0];
    let (s, c) = (std::f64::consts::FRAC_PI_6.sin(), std::f64::consts::FRAC_PI_6.cos());
    let b = [c, s];
    let mut out = 0.0;
    let st = unsafe { vcsd_volume_correlation(a.as_ptr(), 1, b.as_ptr(), 1, 2, &mut out) };
    assert_eq!(st, VcsdStatus::Ok);
    assert!((out - 0.5).abs() < 1e-12);
}

#[test]
fn sample_bound_matches_hand_value() {
    let eigs = [3.0, 2.0];
    let (mut m, mut arg) = (0u64, 0.0);
    let st = unsafe {
        vcsd_sample_bound(
            VcsdHypothesis::Present,
            eigs.as_ptr(),
            2,
            1.0,
            10,
            0.1,
            0.5,
            &mut m,
            &mut arg,
        )
    };
    assert_eq!(st, VcsdStatus::Ok);
    assert_eq!(m, 21408);
    assert!((arg - 5.0).abs() < 1e-12);

    let eigs = [2.0, 2.0];
    let st = unsafe {
        vcsd_sample_bound(
            VcsdHypothesis::Absent,
            eigs.as_ptr(),
            2,
            1.0,
            10,
            0.1,
            0.5,
            &mut m,
            ptr::null_mut(),
        )
    };
    assert_eq!(st, VcsdStatus::SingularInput);
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn have_cc() -> bool {
    Command::new("cc")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "vcsd.h"

int main(void) {
    double eigs[2] = {3.0, 2.0};
    uint64_t m = 0;
    if (vcsd_sample_bound(VCSD_HYPOTHESIS_PRESENT, eigs, 2, 1.0, 10, 0.1, 0.5, &m, NULL) != VCSD_STATUS_OK)
        return 1;
    double basis[3] = {1.0, 0.0, 0.0};
    VcsdDetector *det = NULL;
    if (vcsd_detector_new(basis, 3, 1, NULL, &det) != VCSD_STATUS_OK)
        return 2;
    double y[3] = {0.0, 1.0, 0.0};
    VcsdDecision d;
    if (vcsd_detector_ingest(det, y, 3, &d) != VCSD_STATUS_OK)
        return 3;
    double inv_t = 0.0;
    vcsd_detector_latest(det, NULL, &inv_t, NULL);
    vcsd_detector_free(det);
    printf("%llu %.3f\n", (unsigned long long)m, inv_t);
    return 0;
}
"#;

#[test]
fn header_compiles_as_c() {
    if !have_cc() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(crate_dir().join("include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn static_lib() -> Option<PathBuf> {
    // tests live in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libvcsd_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("skipping: static library not built");
        return;
    };
    if !have_cc() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(Path::new(&bin)).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status);
    // a single clutter direction orthogonal to the target: T = 1
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "21408 1.000");
}
