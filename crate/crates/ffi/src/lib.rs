//! C interface to `smalljump`.
//!
//! Every function returns an [`SjStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`sj_last_error_message`]. Handles are opaque and must be released with
//! their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use smalljump::bounds::{evaluate_bound, epsilon_for_budget, BoundId, BoundInputs, BoundParams};
use smalljump::engine::{simulate_paths, PathBatch, PathConfig, Scheme};
use smalljump::jump_metrics::small_jump_metrics;
use smalljump::levy_models::{make_model, GeneratingTriplet};
use smalljump::Error;

/// Status codes. `SJ_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownModel = 3,
    InvalidArgument = 4,
    Inapplicable = 5,
    BudgetUnreachable = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Simulation scheme selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SjScheme {
    Truncate = 0,
    Gaussian = 1,
    /// Uses the `eps_ref` argument of `sj_simulate`.
    Refined = 2,
}

/// Small-jump functionals at one threshold.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SjMetrics {
    pub eps: f64,
    pub sigma: f64,
    pub sigma0: f64,
    pub rho: f64,
    pub beta: f64,
    pub lambda_tail: f64,
    pub compensator: f64,
    pub infinite_activity: bool,
}

/// Opaque model handle.
pub struct SjModel(GeneratingTriplet);

/// Opaque batch of simulated paths.
pub struct SjBatch(PathBatch);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> SjStatus {
    match err {
        Error::UnknownModel(_) => SjStatus::UnknownModel,
        Error::Inapplicable { .. } => SjStatus::Inapplicable,
        Error::BudgetUnreachable { .. } => SjStatus::BudgetUnreachable,
        Error::InvalidParameter { .. } | Error::InvalidArgument(_) | Error::InvalidConfig(_) | Error::Config { .. } => {
            SjStatus::InvalidArgument
        }
        _ => SjStatus::Numerical,
    }
}

struct Fail(SjStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SjStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SjStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SjStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SjStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn model_ref<'a>(m: *const SjModel) -> Result<&'a GeneratingTriplet, Fail> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("model"))
}

fn bound_params(t: f64, k_lip: f64) -> BoundParams {
    BoundParams {
        t,
        k_lip,
        ..BoundParams::default()
    }
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sj_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a named model from `n` key/value parameter pairs.
///
/// # Safety
/// `name` must be a C string; `keys` and `values` must hold `n` entries
/// (either may be null when `n == 0`); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sj_model_new(
    name: *const c_char,
    keys: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut *mut SjModel,
) -> SjStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let name = str_arg(name, "name")?;
        if n > 0 && (keys.is_null() || values.is_null()) {
            return Err(null("keys/values"));
        }
        let mut params = Vec::with_capacity(n);
        for i in 0..n {
            params.push((str_arg(*keys.add(i), "key")?, *values.add(i)));
        }
        let model = make_model(name, &params)?;
        *out = Box::into_raw(Box::new(SjModel(model)));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `sj_model_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sj_model_free(model: *mut SjModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Small-jump functionals at threshold `eps`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_metrics(model: *const SjModel, eps: f64, out: *mut SjMetrics) -> SjStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = small_jump_metrics(m, eps)?;
        *out = SjMetrics {
            eps: s.eps,
            sigma: s.sigma,
            sigma0: s.sigma0,
            rho: s.rho,
            beta: s.beta,
            lambda_tail: s.lambda_tail,
            compensator: s.compensator,
            infinite_activity: s.infinite_activity,
        };
        Ok(())
    })
}

/// Evaluates a bound by code (`"T1"`, `"B3"`, ...) with horizon `t` and
/// payoff Lipschitz constant `k_lip`; other parameters take defaults.
///
/// # Safety
/// `model` must be a live handle, `bound` a C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_bound(
    model: *const SjModel,
    bound: *const c_char,
    eps: f64,
    t: f64,
    k_lip: f64,
    out: *mut f64,
) -> SjStatus {
    guard(|| {
        let m = model_ref(model)?;
        let id: BoundId = str_arg(bound, "bound")?.parse()?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let report = evaluate_bound(id, &BoundInputs::new(m, eps, bound_params(t, k_lip))?);
        match report.numeric() {
            Some(v) => {
                *out = v;
                Ok(())
            }
            None if !report.is_valid() => Err(Fail(
                SjStatus::Inapplicable,
                format!("bound {id} is inapplicable: {}", report.violations().join("; ")),
            )),
            None => Err(Fail(SjStatus::Inapplicable, format!("bound {id} has no numeric constant"))),
        }
    })
}

/// Largest ε in `[lo, hi]` whose bound value stays within `budget`.
///
/// # Safety
/// `model` must be a live handle, `bound` a C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_epsilon_for_budget(
    model: *const SjModel,
    bound: *const c_char,
    budget: f64,
    t: f64,
    k_lip: f64,
    lo: f64,
    hi: f64,
    out: *mut f64,
) -> SjStatus {
    guard(|| {
        let m = model_ref(model)?;
        let id: BoundId = str_arg(bound, "bound")?.parse()?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = epsilon_for_budget(id, budget, m, &bound_params(t, k_lip), (lo, hi))?;
        Ok(())
    })
}

/// Simulates `n_paths` paths on `n_steps` steps. `workers == 0` uses every
/// core; the output does not depend on it.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sj_simulate(
    model: *const SjModel,
    t: f64,
    n_steps: usize,
    eps: f64,
    scheme: SjScheme,
    eps_ref: f64,
    n_paths: usize,
    seed: u64,
    workers: usize,
    out: *mut *mut SjBatch,
) -> SjStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scheme = match scheme {
            SjScheme::Truncate => Scheme::Truncate,
            SjScheme::Gaussian => Scheme::Gaussian,
            SjScheme::Refined => Scheme::Refined { eps_ref },
        };
        let mut cfg = PathConfig::new(t, n_steps, eps, scheme, n_paths, seed);
        cfg.workers = workers;
        let batch = simulate_paths(m, &cfg)?;
        *out = Box::into_raw(Box::new(SjBatch(batch)));
        Ok(())
    })
}

/// Releases a batch. Null is ignored.
///
/// # Safety
/// `batch` must come from `sj_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sj_batch_free(batch: *mut SjBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// Number of paths in a batch, 0 for null.
///
/// # Safety
/// `batch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sj_batch_len(batch: *const SjBatch) -> usize {
    batch.as_ref().map_or(0, |b| b.0.len())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), Fail> {
    if buf.is_null() {
        return Err(null("buf"));
    }
    if len < src.len() {
        return Err(Fail(
            SjStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Copies the terminal values into `buf` (at least `sj_batch_len` slots).
///
/// # Safety
/// `batch` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sj_batch_terminal(batch: *const SjBatch, buf: *mut f64, len: usize) -> SjStatus {
    guard(|| {
        let b = batch.as_ref().ok_or_else(|| null("batch"))?;
        copy_out(&b.0.terminal, buf, len)
    })
}

/// Copies the grid suprema into `buf` (at least `sj_batch_len` slots).
///
/// # Safety
/// `batch` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sj_batch_supremum(batch: *const SjBatch, buf: *mut f64, len: usize) -> SjStatus {
    guard(|| {
        let b = batch.as_ref().ok_or_else(|| null("batch"))?;
        copy_out(b.0.supremum()?, buf, len)
    })
}
