//! C ABI over `wiener-transport`: experiment configs and reports behind
//! opaque handles, plus a few direct numerical entry points.
//!
//! Every function returns a `WtStatus`. On failure the message is kept per
//! thread and read with `wt_last_error`. Strings returned to the caller are
//! released with `wt_string_free`, handles with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Instant;

use wiener_transport::gaussian::DensityField;
use wiener_transport::harness::{execute, persist, ExperimentConfig, Outcome};
use wiener_transport::inequalities::{talagrand_report, TalagrandConfig, Verdict};
use wiener_transport::monge_ampere::det2;
use wiener_transport::Error;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidPreset = 3,
    Dimension = 4,
    Numerical = 5,
    InvalidInput = 6,
    Io = 7,
    Panic = 8,
}

/// Verdict of an inequality check.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WtVerdict {
    Holds = 0,
    HoldsWithEquality = 1,
    Violated = 2,
}

/// Two estimated sides of `lhs <= rhs` and their verdict.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WtInequality {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub slack: f64,
    pub verdict: WtVerdict,
}

/// Opaque experiment config.
pub struct WtConfig {
    inner: ExperimentConfig,
}

/// Opaque experiment report.
pub struct WtReport {
    outcome: Outcome,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> WtStatus {
    match e {
        Error::InvalidPreset { .. } => WtStatus::InvalidPreset,
        Error::DimensionOverflow { .. } | Error::DimensionMismatch { .. } => WtStatus::Dimension,
        Error::Solver(_)
        | Error::Sampling(_)
        | Error::NotNormalized { .. }
        | Error::NotPositiveDefinite(_)
        | Error::NotInvertible(_)
        | Error::NotOneConvex { .. }
        | Error::InvalidDensityValue { .. } => WtStatus::Numerical,
        Error::Io(_) | Error::Csv(_) => WtStatus::Io,
        Error::InvalidArgument(_) | Error::Unsupported(_) | Error::Config(_) | Error::Json(_) => WtStatus::InvalidInput,
    }
}

struct Failure(WtStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Run `f`, turning errors and panics into a status with a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WtStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            WtStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(WtStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(WtStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

fn report_handle(outcome: Outcome) -> Result<Box<WtReport>, Failure> {
    let bytes = outcome.payload_bytes()?;
    let json = CString::new(bytes).map_err(|_| Failure(WtStatus::Io, "report contains a NUL byte".into()))?;
    Ok(Box::new(WtReport { outcome, json }))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wt_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a JSON experiment config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wt_config_from_json(json: *const c_char, out: *mut *mut WtConfig) -> WtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let inner = ExperimentConfig::from_json(text)?;
        *out = Box::into_raw(Box::new(WtConfig { inner }));
        Ok(())
    })
}

/// Apply one `path=value` override, e.g. `params.eps=1.5`.
///
/// # Safety
/// `config` must be a live handle; `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wt_config_set(config: *mut WtConfig, assignment: *const c_char) -> WtStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        let a = read_str(assignment, "assignment")?;
        c.inner = c.inner.with_overrides(&[a.to_string()])?;
        Ok(())
    })
}

/// Hash naming the run's output directory, as a string to free with
/// `wt_string_free`.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wt_config_hash(config: *const WtConfig, out: *mut *mut c_char) -> WtStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let h = CString::new(c.inner.hash()?).expect("hex digits");
        *out = h.into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wt_config_free(config: *mut WtConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Run the experiment in memory.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wt_execute(config: *const WtConfig, out: *mut *mut WtReport) -> WtStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(report_handle(execute(&c.inner)?)?);
        Ok(())
    })
}

/// Run the experiment and write its artifacts under the output root.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wt_run(config: *const WtConfig, out: *mut *mut WtReport) -> WtStatus {
    guard(|| {
        let c = config.as_ref().ok_or_else(|| null("config"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let started = Instant::now();
        let outcome = execute(&c.inner)?;
        persist(&c.inner, outcome.clone(), started.elapsed().as_secs_f64())?;
        *out = Box::into_raw(report_handle(outcome)?);
        Ok(())
    })
}

/// 1 if every check passed, 0 otherwise, -1 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wt_report_pass(report: *const WtReport) -> i32 {
    match report.as_ref() {
        Some(r) => i32::from(r.outcome.pass()),
        None => -1,
    }
}

/// Number of checks in the report, 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wt_report_check_count(report: *const WtReport) -> usize {
    report.as_ref().map_or(0, |r| r.outcome.checks.len())
}

/// The report document, byte-identical to `report.json`. Owned by the
/// handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wt_report_json(report: *const WtReport) -> *const c_char {
    report.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `report` must be null or a live handle, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wt_report_free(report: *mut WtReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// `det_2(I + A)` from the eigenvalues of `A`.
///
/// # Safety
/// `eigenvalues` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wt_det2(eigenvalues: *const f64, len: usize, out: *mut f64) -> WtStatus {
    guard(|| {
        if out.is_null() || (eigenvalues.is_null() && len > 0) {
            return Err(null("eigenvalues or out"));
        }
        let eig = if len == 0 { &[][..] } else { std::slice::from_raw_parts(eigenvalues, len) };
        *out = det2(eig);
        Ok(())
    })
}

/// Transport cost against twice the entropy for the density preset `preset`
/// in dimension `dim`, with `n` samples.
///
/// # Safety
/// `preset` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wt_talagrand(
    preset: *const c_char,
    dim: usize,
    n: usize,
    seed: u64,
    out: *mut WtInequality,
) -> WtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let l = DensityField::parse(read_str(preset, "preset")?, dim)?;
        let r = talagrand_report(&l, n, seed, &TalagrandConfig::default())?;
        *out = WtInequality {
            lhs: r.lhs.value,
            lhs_stderr: r.lhs.stderr,
            rhs: r.rhs.value,
            rhs_stderr: r.rhs.stderr,
            slack: r.slack,
            verdict: match r.verdict {
                Verdict::Holds => WtVerdict::Holds,
                Verdict::HoldsWithEquality => WtVerdict::HoldsWithEquality,
                Verdict::Violated => WtVerdict::Violated,
            },
        };
        Ok(())
    })
}
