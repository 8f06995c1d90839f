//! C ABI over the `unravel` simulator.
//!
//! Every fallible call returns an [`UnravelStatus`]; on failure a message is
//! kept per thread and read with [`unravel_last_error`]. Handles are opaque
//! and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use unravel::config::RunConfig;
use unravel::scenarios::{check_positivity, preset, Scenario};
use unravel::unraveling::{run_ensemble, EnsembleAccumulator, EnsembleOptions};
use unravel::Error;

/// Result codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnravelStatus {
    Ok = 0,
    /// Null pointer, bad index, too small buffer or non-UTF-8 string.
    InvalidArgument = 1,
    /// Malformed configuration, unknown preset or invalid parameter.
    Config = 2,
    /// Correlation kernel fails the positivity gate or cannot be factorized.
    Inadmissible = 3,
    /// Operator or grid shapes do not fit together.
    DimensionMismatch = 4,
    /// A supplied matrix is not unitary.
    NotUnitary = 5,
    /// Trajectories diverged.
    BlowUp = 6,
    /// File or serialization failure.
    Io = 7,
    /// Closure requirements on the model or kernel are not met.
    Precondition = 8,
    /// Internal error, including caught panics.
    Internal = 99,
}

/// A validated scenario ready to run.
pub struct UnravelScenario {
    inner: Scenario,
}

/// Ensemble averages of one run.
pub struct UnravelResult {
    acc: EnsembleAccumulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> UnravelStatus {
    match e {
        Error::Inadmissible { .. } | Error::FactorizationFailed { .. } => UnravelStatus::Inadmissible,
        Error::DimensionMismatch(_) | Error::GridMismatch(_) => UnravelStatus::DimensionMismatch,
        Error::NotUnitary { .. } => UnravelStatus::NotUnitary,
        Error::BlowUp { .. } | Error::TooManyBlowUps { .. } => UnravelStatus::BlowUp,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => UnravelStatus::Io,
        Error::ClosurePrecondition(_) => UnravelStatus::Precondition,
        Error::NonFinite(_) => UnravelStatus::Internal,
        _ => UnravelStatus::Config,
    }
}

fn fail(status: UnravelStatus, msg: impl Into<String>) -> UnravelStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), UnravelStatus>) -> UnravelStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UnravelStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(UnravelStatus::Internal, "panic inside unravel"),
    }
}

fn lift<T>(r: unravel::Result<T>) -> Result<T, UnravelStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, UnravelStatus> {
    if p.is_null() {
        return Err(fail(UnravelStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(UnravelStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, UnravelStatus> {
    p.as_ref().ok_or_else(|| fail(UnravelStatus::InvalidArgument, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), UnravelStatus> {
    if p.is_null() {
        Err(fail(UnravelStatus::InvalidArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn check_index(i: usize, len: usize, what: &str) -> Result<(), UnravelStatus> {
    if i < len {
        Ok(())
    } else {
        Err(fail(UnravelStatus::InvalidArgument, format!("{what} {i} out of range (len {len})")))
    }
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn unravel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn unravel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a named preset.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unravel_scenario_from_preset(
    name: *const c_char,
    out: *mut *mut UnravelScenario,
) -> UnravelStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let name = str_arg(name, "name")?;
        let spec = lift(preset(name))?;
        let inner = lift(spec.build(Path::new(".")))?;
        *out = Box::into_raw(Box::new(UnravelScenario { inner }));
        Ok(())
    })
}

/// Builds the scenario of a JSON run configuration. Relative kernel files are
/// resolved against `base_dir`, or the working directory when it is null.
///
/// # Safety
/// `json` and a non-null `base_dir` must be NUL-terminated strings; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn unravel_scenario_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut UnravelScenario,
) -> UnravelStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let text = str_arg(json, "json")?;
        let base = if base_dir.is_null() { "." } else { str_arg(base_dir, "base_dir")? };
        let config = lift(RunConfig::from_json(text))?;
        let spec = lift(config.resolve())?;
        let inner = lift(spec.build(Path::new(base)))?;
        *out = Box::into_raw(Box::new(UnravelScenario { inner }));
        Ok(())
    })
}

/// Releases a scenario; null is ignored.
///
/// # Safety
/// `s` must come from a scenario constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn unravel_scenario_free(s: *mut UnravelScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Hilbert-space dimension, or 0 for null.
///
/// # Safety
/// `s` must be null or a live scenario.
#[no_mangle]
pub unsafe extern "C" fn unravel_scenario_dim(s: *const UnravelScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.simulation.model.dim())
}

/// Number of noise channels, or 0 for null.
///
/// # Safety
/// `s` must be null or a live scenario.
#[no_mangle]
pub unsafe extern "C" fn unravel_scenario_channels(s: *const UnravelScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.kernel().n_channels())
}

/// Default ensemble size of the scenario, or 0 for null.
///
/// # Safety
/// `s` must be null or a live scenario.
#[no_mangle]
pub unsafe extern "C" fn unravel_scenario_default_ensemble(s: *const UnravelScenario) -> usize {
    s.as_ref().map_or(0, |s| s.inner.spec.ensemble)
}

/// Positivity gate of the scenario's correlation kernel. Writes the smallest
/// block eigenvalue; returns `Inadmissible` when the gate fails.
///
/// # Safety
/// `s` must be a live scenario; `min_eigenvalue` may be null.
#[no_mangle]
pub unsafe extern "C" fn unravel_check_positivity(
    s: *const UnravelScenario,
    min_eigenvalue: *mut f64,
) -> UnravelStatus {
    guard(|| {
        let s = handle(s, "scenario")?;
        let (_, report) = lift(check_positivity(&s.inner))?;
        if !min_eigenvalue.is_null() {
            *min_eigenvalue = report.min_eigenvalue;
        }
        lift(report.into_result()).map(|_| ())
    })
}

/// Averages `m` trajectories with master seed `seed`. `threads` = 0 uses the
/// global pool.
///
/// # Safety
/// `s` must be a live scenario and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unravel_run(
    s: *const UnravelScenario,
    m: usize,
    seed: u64,
    threads: usize,
    out: *mut *mut UnravelResult,
) -> UnravelStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let s = handle(s, "scenario")?;
        let opts = EnsembleOptions { threads: (threads > 0).then_some(threads), ..EnsembleOptions::default() };
        let run = lift(run_ensemble(&s.inner.simulation, m, seed, opts))?;
        *out = Box::into_raw(Box::new(UnravelResult { acc: run.accumulator }));
        Ok(())
    })
}

/// Releases a result; null is ignored.
///
/// # Safety
/// `r` must come from [`unravel_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_free(r: *mut UnravelResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of output times, or 0 for null.
///
/// # Safety
/// `r` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_len(r: *const UnravelResult) -> usize {
    r.as_ref().map_or(0, |r| r.acc.times().len())
}

/// Number of trajectories that entered the averages, or 0 for null.
///
/// # Safety
/// `r` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_trajectories(r: *const UnravelResult) -> usize {
    r.as_ref().map_or(0, |r| r.acc.count())
}

/// Copies the output times into `times[0..len]`.
///
/// # Safety
/// `r` must be a live result and `times` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_times(r: *const UnravelResult, times: *mut f64, len: usize) -> UnravelStatus {
    guard(|| {
        let r = handle(r, "result")?;
        out_ptr(times, "times")?;
        let t = r.acc.times();
        if len < t.len() {
            return Err(fail(UnravelStatus::InvalidArgument, format!("buffer holds {len}, need {}", t.len())));
        }
        ptr::copy_nonoverlapping(t.as_ptr(), times, t.len());
        Ok(())
    })
}

/// Mean density matrix at output index `i`, row-major as interleaved
/// (re, im) pairs: `buf` needs 2 d² entries. `stderr`, when non-null,
/// receives d² standard errors.
///
/// # Safety
/// `r` must be a live result; `buf` valid for `len` writes; `stderr` null or valid for d² writes.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_mean_rho(
    r: *const UnravelResult,
    i: usize,
    buf: *mut f64,
    len: usize,
    stderr: *mut f64,
) -> UnravelStatus {
    guard(|| {
        let r = handle(r, "result")?;
        out_ptr(buf, "buf")?;
        check_index(i, r.acc.times().len(), "time index")?;
        let d = r.acc.dim();
        if len < 2 * d * d {
            return Err(fail(UnravelStatus::InvalidArgument, format!("buffer holds {len}, need {}", 2 * d * d)));
        }
        let (mean, se) = (r.acc.mean_rho(i), r.acc.rho_stderr(i));
        for a in 0..d {
            for b in 0..d {
                let k = a * d + b;
                *buf.add(2 * k) = mean[(a, b)].re;
                *buf.add(2 * k + 1) = mean[(a, b)].im;
                if !stderr.is_null() {
                    *stderr.add(k) = se[(a, b)];
                }
            }
        }
        Ok(())
    })
}

/// Mean of observable `k` at output index `i` and its standard error.
///
/// # Safety
/// `r` must be a live result; `re`, `im`, `stderr` may each be null.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_observable(
    r: *const UnravelResult,
    k: usize,
    i: usize,
    re: *mut f64,
    im: *mut f64,
    stderr: *mut f64,
) -> UnravelStatus {
    guard(|| {
        let r = handle(r, "result")?;
        check_index(k, r.acc.observable_names().len(), "observable index")?;
        check_index(i, r.acc.times().len(), "time index")?;
        let m = r.acc.observable_mean(k, i);
        for (p, v) in [(re, m.re), (im, m.im), (stderr, r.acc.observable_stderr(k, i))] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Index of the observable called `name`, or -1 when absent or on bad input.
///
/// # Safety
/// `r` must be null or a live result; `name` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn unravel_result_observable_index(r: *const UnravelResult, name: *const c_char) -> i64 {
    let (Some(r), false) = (r.as_ref(), name.is_null()) else {
        return -1;
    };
    CStr::from_ptr(name).to_str().ok().and_then(|n| r.acc.observable_index(n)).map_or(-1, |k| k as i64)
}
