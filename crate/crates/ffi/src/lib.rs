//! C ABI over `relaxbc`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Every fallible call returns an [`RbcStatus`]; the
//! message of the most recent failure on the calling thread is available
//! from [`rbc_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use relaxbc::model::{compute_indices, parse_system, RelaxationSystem};
use relaxbc::reduction::{derive_reduced_bc, Analysis, ReduceOptions, ReducedBc};
use relaxbc::spectral::{check_gkc, SamplingSpec};
use relaxbc::Error;

/// Status codes; the first four agree with the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbcStatus {
    Ok = 0,
    CheckFailed = 1,
    ConfigError = 2,
    NumericalError = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Characteristic counts of a system.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbcIndices {
    pub n: usize,
    pub r: usize,
    pub d: usize,
    pub n0: usize,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n10: usize,
    pub n1_plus: usize,
    pub n1_minus: usize,
}

/// Opaque system handle.
pub struct RbcSystem {
    sys: RelaxationSystem,
}

/// Opaque reduced boundary condition handle.
pub struct RbcReducedBc {
    bc: ReducedBc,
    report: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RbcStatus {
    match e.exit_code() {
        1 => RbcStatus::CheckFailed,
        2 => RbcStatus::ConfigError,
        _ => RbcStatus::NumericalError,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (RbcStatus, String)>) -> RbcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RbcStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RbcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RbcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (RbcStatus, String) {
    (RbcStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rbc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a system from a NUL-terminated JSON document.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rbc_system_from_json(json: *const c_char, out: *mut *mut RbcSystem) -> RbcStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (RbcStatus::ConfigError, "json is not valid UTF-8".to_string()))?;
        let (sys, _) = parse_system(text, "<ffi>").map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RbcSystem { sys }));
        Ok(())
    })
}

/// # Safety
/// `sys` must come from [`rbc_system_from_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rbc_system_free(sys: *mut RbcSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rbc_system_indices(sys: *const RbcSystem, out: *mut RbcIndices) -> RbcStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let idx = compute_indices(&s.sys).map_err(lib_err)?;
        *o = RbcIndices {
            n: s.sys.n,
            r: s.sys.r,
            d: s.sys.d,
            n0: idx.n0,
            n_plus: idx.n_plus,
            n_minus: idx.n_minus,
            n10: idx.n10,
            n1_plus: idx.n1_plus,
            n1_minus: idx.n1_minus,
        };
        Ok(())
    })
}

/// Runs the standing-assumption checks; `*pass` is 1 if all hold. On
/// failure the failing check names are the last error message.
///
/// # Safety
/// Both pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rbc_system_validate(sys: *const RbcSystem, pass: *mut c_int) -> RbcStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let p = pass.as_mut().ok_or_else(|| null("pass"))?;
        let rep = s.sys.validate();
        *p = rep.pass() as c_int;
        if !rep.pass() {
            set_error(rep.failures().join("; "));
        }
        Ok(())
    })
}

/// Samples the generalized Kreiss condition. `resolution` 0 selects the
/// default grid and `threshold <= 0` the default constant.
///
/// # Safety
/// `sys`, `min_ratio` and `pass` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rbc_gkc(
    sys: *const RbcSystem,
    resolution: usize,
    threshold: f64,
    seed: u64,
    min_ratio: *mut f64,
    pass: *mut c_int,
) -> RbcStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        let m = min_ratio.as_mut().ok_or_else(|| null("min_ratio"))?;
        let p = pass.as_mut().ok_or_else(|| null("pass"))?;
        let spec = sampling(resolution, threshold, seed);
        let analysis = Analysis::new(s.sys.clone()).map_err(lib_err)?;
        let rep = check_gkc(&analysis, &spec).map_err(lib_err)?;
        *m = rep.min_ratio;
        *p = rep.pass as c_int;
        Ok(())
    })
}

fn sampling(resolution: usize, threshold: f64, seed: u64) -> SamplingSpec {
    let mut spec = SamplingSpec {
        seed,
        ..SamplingSpec::default()
    };
    if resolution > 0 {
        spec.resolution = resolution;
    }
    if threshold > 0.0 {
        spec.c_threshold = threshold;
    }
    spec
}

/// Derives the reduced boundary condition with default sampling. Without
/// `force` a failed Kreiss check returns [`RbcStatus::CheckFailed`].
///
/// # Safety
/// `sys` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduce(sys: *const RbcSystem, force: c_int, out: *mut *mut RbcReducedBc) -> RbcStatus {
    guard(|| {
        let s = sys.as_ref().ok_or_else(|| null("sys"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rep = s.sys.validate();
        if !rep.pass() {
            return Err(lib_err(Error::ValidationFailed(rep.failures())));
        }
        let analysis = Analysis::new(s.sys.clone()).map_err(lib_err)?;
        let spec = SamplingSpec::default();
        let gkc = check_gkc(&analysis, &spec).map_err(lib_err)?;
        let opts = ReduceOptions {
            force: force != 0,
            sampling: spec,
        };
        let bc = derive_reduced_bc(&analysis, Some(&gkc), &opts).map_err(lib_err)?;
        let report = serde_json::json!({
            "equations": bc.equations,
            "ukc_certificate": bc.ukc,
            "residuals": bc.residuals,
            "forced": bc.forced,
        });
        let report = CString::new(report.to_string()).expect("json has no NUL");
        *out = Box::into_raw(Box::new(RbcReducedBc { bc, report }));
        Ok(())
    })
}

/// # Safety
/// `bc` must come from [`rbc_reduce`] or be null.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_free(bc: *mut RbcReducedBc) {
    if !bc.is_null() {
        drop(Box::from_raw(bc));
    }
}

/// Number of reduced conditions (rows of the operator), 0 for a null handle.
///
/// # Safety
/// `bc` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_rows(bc: *const RbcReducedBc) -> usize {
    bc.as_ref().map_or(0, |b| b.bc.normalized_operator.nrows())
}

/// Number of equilibrium unknowns (operator columns).
///
/// # Safety
/// `bc` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_unknowns(bc: *const RbcReducedBc) -> usize {
    bc.as_ref().map_or(0, |b| b.bc.normalized_operator.ncols())
}

/// Number of boundary data components (right-hand side columns).
///
/// # Safety
/// `bc` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_data_len(bc: *const RbcReducedBc) -> usize {
    bc.as_ref().map_or(0, |b| b.bc.normalized_rhs.ncols())
}

unsafe fn copy_rows(m: &relaxbc::linalg::RMat, buf: *mut f64, len: usize) -> Result<(), (RbcStatus, String)> {
    let need = m.nrows() * m.ncols();
    if len < need {
        return Err((
            RbcStatus::ConfigError,
            format!("buffer holds {len} values, need {need}"),
        ));
    }
    if need == 0 {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buf"));
    }
    let out = std::slice::from_raw_parts_mut(buf, need);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

/// Copies the row-reduced operator acting on the equilibrium state, row
/// major, into `buf` (at least rows × unknowns values).
///
/// # Safety
/// `bc` must be valid and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_operator(bc: *const RbcReducedBc, buf: *mut f64, len: usize) -> RbcStatus {
    guard(|| {
        let b = bc.as_ref().ok_or_else(|| null("bc"))?;
        copy_rows(&b.bc.normalized_operator, buf, len)
    })
}

/// Copies the matching right-hand side on the boundary data, row major.
///
/// # Safety
/// `bc` must be valid and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_rhs(bc: *const RbcReducedBc, buf: *mut f64, len: usize) -> RbcStatus {
    guard(|| {
        let b = bc.as_ref().ok_or_else(|| null("bc"))?;
        copy_rows(&b.bc.normalized_rhs, buf, len)
    })
}

/// Smallest sampled reduced Kreiss ratio; 1 when the condition is vacuous.
///
/// # Safety
/// `bc` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_ukc_min_ratio(bc: *const RbcReducedBc) -> f64 {
    bc.as_ref().map_or(f64::NAN, |b| b.bc.ukc.min_ratio)
}

/// JSON summary (equations, certificate, residuals). Owned by the handle.
///
/// # Safety
/// `bc` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn rbc_reduced_bc_report_json(bc: *const RbcReducedBc) -> *const c_char {
    bc.as_ref().map_or(ptr::null(), |b| b.report.as_ptr())
}
