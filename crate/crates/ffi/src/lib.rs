//! C ABI for `multisym`.
//!
//! Objects are opaque handles created by `ms_*_new`/`ms_*_from_*` and released
//! with the matching `ms_*_free`. Every fallible call returns an [`MsStatus`];
//! on failure [`ms_last_error`] describes the problem. Array arguments are
//! plain `double` buffers whose lengths follow from the theory dimensions
//! (`n` base dimensions, `N` fields): `x` has `n` entries, `q` has `N`,
//! momenta and velocities have `n·N` (μ-major), phase-space points have
//! `(N+1)(n+1)`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use multisym::dedonder_weyl::{build_hamiltonian_nvector, verify_defining_relation, Gauge};
use multisym::field_solver::{evolve, FieldState, GridSpec, Trajectory};
use multisym::phase_space::ChartPoint;
use multisym::scenario::{exit_code, run_scenario, ScenarioConfig, TheoryConfig};
use multisym::theory::{legendre_transform, DwHamiltonian, JetPoint, ScalarTheory};
use multisym::Error;

/// Result codes. `0..=3` match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    CheckFailed = 1,
    Config = 2,
    Divergence = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Numerical = 6,
    Panic = 7,
}

/// A scalar field theory.
pub struct MsTheory(ScalarTheory);

/// A recorded grid solution.
pub struct MsTrajectory(Trajectory);

/// Grid parameters for [`ms_evolve`]. `cfl <= 0` disables the CFL guard.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MsGrid {
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_final: f64,
    pub cfl: f64,
    pub sample_every: usize,
    pub blowup_limit: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> MsStatus {
    match err.root() {
        Error::Divergence { .. } => MsStatus::Divergence,
        Error::Config(_) | Error::Parse(_) | Error::InvalidGrid(_) | Error::Io(_) => MsStatus::Config,
        Error::Singular { .. } | Error::Eval(_) => MsStatus::Numerical,
        _ => MsStatus::InvalidArgument,
    }
}

/// Run `f`, recording errors and turning panics into [`MsStatus::Panic`].
fn guard<F: FnOnce() -> Result<MsStatus, (MsStatus, String)>>(f: F) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MsStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (MsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MsStatus, String) {
    (MsStatus::NullPointer, format!("`{what}` is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MsStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (MsStatus, String)> {
    if p.is_null() {
        if len == 0 {
            return Ok(&[]);
        }
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (MsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn theory_arg<'a>(p: *const MsTheory) -> Result<&'a ScalarTheory, (MsStatus, String)> {
    p.as_ref().map(|t| &t.0).ok_or_else(|| null("theory"))
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Build a theory from a JSON object such as `{"name": "free-scalar", "mass": 1.0}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ms_theory_from_json(json: *const c_char, out: *mut *mut MsTheory) -> MsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = TheoryConfig::from_json(str_arg(json, "json")?).map_err(lib_err)?;
        let theory = cfg.build().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MsTheory(theory)));
        Ok(MsStatus::Ok)
    })
}

/// # Safety
/// `theory` must come from [`ms_theory_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_theory_free(theory: *mut MsTheory) {
    if !theory.is_null() {
        drop(Box::from_raw(theory));
    }
}

/// Base dimension `n` and number of fields `N`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ms_theory_dims(theory: *const MsTheory, n: *mut usize, fields: *mut usize) -> MsStatus {
    guard(|| {
        let spec = DwHamiltonian::chart(theory_arg(theory)?);
        *out_arg(n, "n")? = spec.n();
        *out_arg(fields, "fields")? = spec.fields();
        Ok(MsStatus::Ok)
    })
}

/// Covariant Legendre map: polymomenta `p^μ_i` (n·N values) and `p`.
///
/// # Safety
/// Buffers must hold the lengths given in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn ms_legendre(
    theory: *const MsTheory,
    x: *const f64,
    q: *const f64,
    v: *const f64,
    out_pmom: *mut f64,
    out_p: *mut f64,
) -> MsStatus {
    guard(|| {
        let th = theory_arg(theory)?;
        let spec = DwHamiltonian::chart(th);
        let (n, nf) = (spec.n(), spec.fields());
        let jet = JetPoint::new(
            spec,
            slice_arg(x, n, "x")?.to_vec(),
            slice_arg(q, nf, "q")?.to_vec(),
            slice_arg(v, n * nf, "v")?.to_vec(),
        )
        .map_err(lib_err)?;
        let pt = legendre_transform(th, &jet).map_err(lib_err)?;
        if out_pmom.is_null() {
            return Err(null("out_pmom"));
        }
        slice::from_raw_parts_mut(out_pmom, n * nf).copy_from_slice(&pt.pmom);
        *out_arg(out_p, "out_p")? = pt.p;
        Ok(MsStatus::Ok)
    })
}

/// De Donder–Weyl Hamiltonian `𝓗(x, q, p^μ_i)`.
///
/// # Safety
/// Buffers must hold the lengths given in the crate docs.
#[no_mangle]
pub unsafe extern "C" fn ms_hamiltonian(
    theory: *const MsTheory,
    x: *const f64,
    q: *const f64,
    pmom: *const f64,
    out_value: *mut f64,
) -> MsStatus {
    guard(|| {
        let th = theory_arg(theory)?;
        let spec = DwHamiltonian::chart(th);
        let (n, nf) = (spec.n(), spec.fields());
        let value = th
            .value(slice_arg(x, n, "x")?, slice_arg(q, nf, "q")?, slice_arg(pmom, n * nf, "pmom")?)
            .map_err(lib_err)?;
        *out_arg(out_value, "out_value")? = value;
        Ok(MsStatus::Ok)
    })
}

/// Build `X_h` at a phase-space point and return `max |i_{X_h} ω − dh|`.
/// `gauge` may be NULL (no gauge) or hold `n·n·N` trace-free values.
///
/// # Safety
/// `coords` must hold `(N+1)(n+1)` values; other pointers as documented.
#[no_mangle]
pub unsafe extern "C" fn ms_verify_defining_relation(
    theory: *const MsTheory,
    coords: *const f64,
    gauge: *const f64,
    out_residual: *mut f64,
) -> MsStatus {
    guard(|| {
        let th = theory_arg(theory)?;
        let spec = DwHamiltonian::chart(th);
        let at = ChartPoint::from_coords(spec, slice_arg(coords, spec.dim(), "coords")?).map_err(lib_err)?;
        let gauge = if gauge.is_null() {
            Gauge::Zero
        } else {
            let len = spec.n() * spec.n() * spec.fields();
            Gauge::TraceFree(slice_arg(gauge, len, "gauge")?.to_vec())
        };
        let x = build_hamiltonian_nvector(th, &at, &gauge).map_err(lib_err)?;
        let report = verify_defining_relation(th, &x, &at).map_err(lib_err)?;
        *out_arg(out_residual, "out_residual")? = report.residual;
        Ok(MsStatus::Ok)
    })
}

/// Integrate from `(phi, pi0)` (each `nx·N` values, node-major).
///
/// # Safety
/// `grid` and `out` must be valid; buffers as documented.
#[no_mangle]
pub unsafe extern "C" fn ms_evolve(
    theory: *const MsTheory,
    grid: *const MsGrid,
    phi: *const f64,
    pi0: *const f64,
    out: *mut *mut MsTrajectory,
) -> MsStatus {
    guard(|| {
        let th = theory_arg(theory)?;
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        let out = out_arg(out, "out")?;
        let nf = DwHamiltonian::chart(th).fields();
        let spec = GridSpec {
            nx: g.nx,
            dx: g.dx,
            dt: g.dt,
            t_final: g.t_final,
            cfl: (g.cfl > 0.0).then_some(g.cfl),
            sample_every: g.sample_every,
            blowup_limit: g.blowup_limit,
        };
        let len = g.nx * nf;
        let s0 = FieldState {
            t: 0.0,
            phi: slice_arg(phi, len, "phi")?.to_vec(),
            pi0: slice_arg(pi0, len, "pi0")?.to_vec(),
        };
        let traj = evolve(th, &s0, &spec).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MsTrajectory(traj)));
        Ok(MsStatus::Ok)
    })
}

/// # Safety
/// `traj` must come from [`ms_evolve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_free(traj: *mut MsTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of recorded samples, or 0 for NULL.
///
/// # Safety
/// `traj` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_len(traj: *const MsTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.samples.len())
}

/// Relative energy drift over the run.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_energy_drift(traj: *const MsTrajectory, out: *mut f64) -> MsStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        *out_arg(out, "out")? = t.0.energy_drift();
        Ok(MsStatus::Ok)
    })
}

/// Copy `φ` of sample `index` (`nx·N` values) into `out`.
///
/// # Safety
/// `out` must hold `nx·N` values.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_phi(
    traj: *const MsTrajectory,
    index: usize,
    out: *mut f64,
    out_t: *mut f64,
) -> MsStatus {
    guard(|| {
        let t = &traj.as_ref().ok_or_else(|| null("traj"))?.0;
        let s = t.samples.get(index).ok_or_else(|| {
            (
                MsStatus::InvalidArgument,
                format!("sample {index} out of range (have {})", t.samples.len()),
            )
        })?;
        if out.is_null() {
            return Err(null("out"));
        }
        slice::from_raw_parts_mut(out, s.state.phi.len()).copy_from_slice(&s.state.phi);
        *out_arg(out_t, "out_t")? = s.state.t;
        Ok(MsStatus::Ok)
    })
}

/// Write the trajectory CSV (`t,x,phi,pi0,pi1,energy_density`).
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ms_trajectory_write_csv(traj: *const MsTrajectory, path: *const c_char) -> MsStatus {
    guard(|| {
        let t = traj.as_ref().ok_or_else(|| null("traj"))?;
        let path = str_arg(path, "path")?;
        let file = std::fs::File::create(path).map_err(|e| lib_err(e.into()))?;
        t.0.write_csv(std::io::BufWriter::new(file)).map_err(lib_err)?;
        Ok(MsStatus::Ok)
    })
}

/// Run a scenario given as JSON (the task must be in the document) and write
/// its artifacts into `out_dir`. Returns [`MsStatus::CheckFailed`] when the
/// scenario ran but a check failed.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ms_run_scenario(json: *const c_char, out_dir: *const c_char) -> MsStatus {
    guard(|| {
        let cfg = ScenarioConfig::from_json(str_arg(json, "json")?).map_err(lib_err)?;
        let dir = str_arg(out_dir, "out_dir")?;
        let outcome = run_scenario(&cfg, Path::new(dir));
        let status = match exit_code(&outcome) {
            0 => MsStatus::Ok,
            1 => MsStatus::CheckFailed,
            2 => MsStatus::Config,
            _ => MsStatus::Divergence,
        };
        match outcome {
            Ok(summary) if !summary.passed => {
                let failed: Vec<&str> = summary
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                set_error(format!("failed checks: {}", failed.join(", ")));
                Ok(status)
            }
            Ok(_) => Ok(status),
            Err(e) => Err((status, e.to_string())),
        }
    })
}
