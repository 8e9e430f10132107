use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use multisym_ffi::*;

fn theory(json: &str) -> *mut MsTheory {
    let json = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { ms_theory_from_json(json.as_ptr(), &mut out) };
    assert_eq!(status, MsStatus::Ok);
    assert!(!out.is_null());
    out
}

fn last_error() -> String {
    let p = ms_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn dims_and_legendre() {
    let t = theory(r#"{"name": "free-scalar", "mass": 1.0}"#);
    let (mut n, mut nf) = (0usize, 0usize);
    assert_eq!(unsafe { ms_theory_dims(t, &mut n, &mut nf) }, MsStatus::Ok);
    assert_eq!((n, nf), (2, 1));

    let (x, q, v) = ([0.0, 0.0], [3.0], [2.0, 1.0]);
    let mut pmom = [0.0; 2];
    let mut p = 0.0;
    let status = unsafe { ms_legendre(t, x.as_ptr(), q.as_ptr(), v.as_ptr(), pmom.as_mut_ptr(), &mut p) };
    assert_eq!(status, MsStatus::Ok);
    assert_eq!(pmom, [2.0, -1.0]);
    // p = 𝓛 − p·v = −𝓗 = −(½·4 − ½·1 + ½·9)
    assert_eq!(p, -6.0);

    let mut h = 0.0;
    assert_eq!(unsafe { ms_hamiltonian(t, x.as_ptr(), q.as_ptr(), pmom.as_ptr(), &mut h) }, MsStatus::Ok);
    assert_eq!(h, 6.0);
    unsafe { ms_theory_free(t) };
}

#[test]
fn defining_relation_through_the_c_api() {
    let t = theory(r#"{"name": "sine-gordon"}"#);
    let coords = [0.1, -0.3, 0.7, 0.4, -1.2, 2.0];
    let gauge = [0.5, -0.2, 0.3, -0.5];
    let mut r = f64::NAN;
    assert_eq!(
        unsafe { ms_verify_defining_relation(t, coords.as_ptr(), gauge.as_ptr(), &mut r) },
        MsStatus::Ok
    );
    assert!(r < 1e-12, "{r}");
    assert_eq!(
        unsafe { ms_verify_defining_relation(t, coords.as_ptr(), ptr::null(), &mut r) },
        MsStatus::Ok
    );
    let bad_gauge = [1.0, 0.0, 0.0, 1.0];
    assert_eq!(
        unsafe { ms_verify_defining_relation(t, coords.as_ptr(), bad_gauge.as_ptr(), &mut r) },
        MsStatus::InvalidArgument
    );
    assert!(last_error().contains("trace"));
    unsafe { ms_theory_free(t) };
}

#[test]
fn errors_are_reported() {
    let mut out = ptr::null_mut();
    let json = CString::new(r#"{"name": "custom", "potential": "0.5*q1^^2"}"#).unwrap();
    assert_eq!(unsafe { ms_theory_from_json(json.as_ptr(), &mut out) }, MsStatus::Config);
    assert!(last_error().contains("byte 7"));
    assert!(out.is_null());
    assert_eq!(unsafe { ms_theory_from_json(ptr::null(), &mut out) }, MsStatus::NullPointer);
    let mut n = 0usize;
    assert_eq!(unsafe { ms_theory_dims(ptr::null(), &mut n, &mut n) }, MsStatus::NullPointer);
    unsafe {
        ms_theory_free(ptr::null_mut());
        ms_trajectory_free(ptr::null_mut());
    }
}

#[test]
fn evolve_and_export() {
    let t = theory(r#"{"name": "free-scalar", "mass": 1.0}"#);
    let nx = 64;
    let dx = 2.0 * std::f64::consts::PI / nx as f64;
    let grid = MsGrid {
        nx,
        dx,
        dt: 0.5 * dx,
        t_final: 1.0,
        cfl: 1.0,
        sample_every: 10,
        blowup_limit: 1e12,
    };
    let w = 2f64.sqrt();
    let phi: Vec<f64> = (0..nx).map(|j| (j as f64 * dx).cos()).collect();
    let pi0: Vec<f64> = (0..nx).map(|j| w * (j as f64 * dx).sin()).collect();
    let mut traj = ptr::null_mut();
    assert_eq!(
        unsafe { ms_evolve(t, &grid, phi.as_ptr(), pi0.as_ptr(), &mut traj) },
        MsStatus::Ok
    );
    let len = unsafe { ms_trajectory_len(traj) };
    assert!(len >= 2);
    let mut drift = 1.0;
    assert_eq!(unsafe { ms_trajectory_energy_drift(traj, &mut drift) }, MsStatus::Ok);
    assert!(drift < 1e-6);
    let mut last = vec![0.0; nx];
    let mut time = 0.0;
    assert_eq!(
        unsafe { ms_trajectory_phi(traj, len - 1, last.as_mut_ptr(), &mut time) },
        MsStatus::Ok
    );
    assert!((time - 1.0).abs() < 1e-12);
    let err = (0..nx)
        .map(|j| (last[j] - (j as f64 * dx - w).cos()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-2, "{err}");
    assert_eq!(
        unsafe { ms_trajectory_phi(traj, len, last.as_mut_ptr(), &mut time) },
        MsStatus::InvalidArgument
    );

    let dir = std::env::temp_dir().join(format!("multisym-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("traj.csv");
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ms_trajectory_write_csv(traj, cpath.as_ptr()) }, MsStatus::Ok);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("t,x,phi,pi0,pi1,energy_density\n"));
    assert_eq!(text.lines().count(), 1 + len * nx);
    unsafe {
        ms_trajectory_free(traj);
        ms_theory_free(t);
    }
}

#[test]
fn divergence_status() {
    let t = theory(r#"{"name": "free-scalar", "mass": 1.0}"#);
    let nx = 32;
    let dx = 2.0 * std::f64::consts::PI / nx as f64;
    let grid = MsGrid {
        nx,
        dx,
        dt: 4.0 * dx,
        t_final: 50.0,
        cfl: 0.0,
        sample_every: 1,
        blowup_limit: 1e12,
    };
    let phi: Vec<f64> = (0..nx).map(|j| (j as f64 * dx).cos() + 1e-8 * (j as f64).sin()).collect();
    let pi0 = vec![0.0; nx];
    let mut traj = ptr::null_mut();
    assert_eq!(
        unsafe { ms_evolve(t, &grid, phi.as_ptr(), pi0.as_ptr(), &mut traj) },
        MsStatus::Divergence
    );
    assert!(traj.is_null());
    unsafe { ms_theory_free(t) };
}

#[test]
fn scenario_statuses() {
    let dir = std::env::temp_dir().join(format!("multisym-ffi-scn-{}", std::process::id()));
    let cdir = CString::new(dir.to_str().unwrap()).unwrap();
    let ok = CString::new(r#"{"task": "verify-xh", "theory": {"name": "oscillator"}, "samples": 5, "seed": 7}"#)
        .unwrap();
    assert_eq!(unsafe { ms_run_scenario(ok.as_ptr(), cdir.as_ptr()) }, MsStatus::Ok);
    assert!(dir.join("verify_xh.csv").exists());
    assert!(dir.join("summary.json").exists());

    let bad = CString::new(r#"{"task": "integrate", "theory": {"name": "oscillator"}}"#).unwrap();
    assert_eq!(unsafe { ms_run_scenario(bad.as_ptr(), cdir.as_ptr()) }, MsStatus::Config);
    assert!(last_error().contains("grid"));

    let failing = CString::new(
        r#"{"task": "foliation-check", "theory": {"name": "free-scalar", "mass": 0.0},
            "hj": {"builtin": "twisted", "domain": {"lower": [0,0,0], "upper": [1,1,1]}, "lattice": 2}}"#,
    )
    .unwrap();
    assert_eq!(unsafe { ms_run_scenario(failing.as_ptr(), cdir.as_ptr()) }, MsStatus::CheckFailed);
    assert!(last_error().contains("frobenius"));
}

#[test]
fn header_declares_the_api() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/multisym.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "ms_last_error",
        "ms_theory_from_json",
        "ms_theory_free",
        "ms_legendre",
        "ms_hamiltonian",
        "ms_verify_defining_relation",
        "ms_evolve",
        "ms_trajectory_write_csv",
        "ms_run_scenario",
        "typedef struct MsTheory MsTheory",
        "MS_STATUS_DIVERGENCE = 3",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Compile and run a small C program against the header and static library
/// when a C compiler and the archive are available.
#[test]
fn c_program_links() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest.join("../../target"));
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    let archive = target.join(profile).join("libmultisym_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !archive.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = std::env::temp_dir().join(format!("multisym-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "multisym.h"
int main(void) {
    MsTheory *t = NULL;
    if (ms_theory_from_json("{\"name\": \"oscillator\"}", &t) != MS_STATUS_OK) return 10;
    double coords[4] = {0.0, 1.0, 0.5, -0.625};
    double r = -1.0;
    if (ms_verify_defining_relation(t, coords, NULL, &r) != MS_STATUS_OK) return 11;
    if (r > 1e-12) return 12;
    if (ms_theory_from_json("{\"name\": \"nope\"}", &t) != MS_STATUS_CONFIG) return 13;
    if (ms_last_error() == NULL) return 14;
    ms_theory_free(t);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
