//! C ABI for the sparse covariance estimators.
//!
//! Conventions:
//! - Every fallible call returns an [`LrcovStatus`]; `LRCOV_STATUS_OK` is 0.
//!   On any other status, [`lrcov_last_error_message`] returns a
//!   human-readable description. The message is thread-local and stays
//!   valid until the next failing call on the same thread.
//! - Handles (`LrcovPanel`, `LrcovEstimate`) are opaque; free them with the
//!   matching `_free` function exactly once. `_free(NULL)` is a no-op.
//! - Matrices cross the boundary as dense row-major `double` buffers of
//!   length `p * p`, allocated by the caller.
//! - No call aborts the process: panics are caught at the boundary and
//!   reported as `LRCOV_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use lrcov::covariance::{cai_liu_variance, sample_cov_centered};
use lrcov::error::Error;
use lrcov::linalg::{spectral_norm, SymMatrix};
use lrcov::lrv::{lrv_matrix, Bandwidth, KernelKind, KernelSpec};
use lrcov::panel::{self, TimeSeriesPanel};
use lrcov::portfolio::gmvp_weights;
use lrcov::threshold::{threshold_matrix, EstimatorSpec, Method, ThresholdRule, ThresholdedCov};
use lrcov::tuning::{block_cv_delta, BlockCvConfig};

use ndarray::Array2;

/// Result category of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrcovStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// File could not be read or written.
    Io = 3,
    /// Malformed input file.
    Parse = 4,
    /// Invalid option combination or input shape.
    Config = 5,
    /// Numerical failure (non-convergence, degenerate input).
    Numerical = 6,
    /// Internal invariant violation caught at the boundary.
    Panic = 7,
}

/// Threshold scale family.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrcovMethod {
    /// Entry-wise long-run-variance thresholds.
    Proposed = 0,
    /// One universal threshold sqrt(log p / n).
    Universal = 1,
    /// Entry-wise contemporaneous-variance thresholds (Cai-Liu).
    CaiLiu = 2,
}

/// Shrinkage rule applied at each entry.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrcovRule {
    Hard = 0,
    Soft = 1,
    /// Uses the `eta` field of the options.
    AdaptiveLasso = 2,
}

/// Kernel for the long-run-variance estimator (proposed method only).
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrcovKernel {
    QuadraticSpectral = 0,
    Bartlett = 1,
    Parzen = 2,
    TukeyHanning = 3,
}

/// Everything `lrcov_estimate` needs besides the panel. Obtain a filled-in
/// baseline from `lrcov_estimate_options_default` and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LrcovEstimateOptions {
    pub method: LrcovMethod,
    pub rule: LrcovRule,
    /// Adaptive-lasso exponent, >= 1. Ignored by the other rules.
    pub eta: f64,
    /// Threshold constant. Any negative value selects delta by block
    /// cross-validation on consecutive time folds.
    pub delta: f64,
    pub kernel: LrcovKernel,
    /// Kernel bandwidth. Non-positive (or NaN) selects the AR(1) plug-in
    /// bandwidth per product series.
    pub bandwidth: f64,
    /// Also threshold diagonal entries (off by default).
    pub threshold_diagonal: bool,
    /// Cross-validation: number of consecutive blocks.
    pub cv_blocks: usize,
    /// Cross-validation: rows removed around the validation block.
    pub cv_buffer: usize,
    /// Cross-validation: grid resolution M, candidates j/M for 0 <= j <= 4M.
    pub cv_grid_m: usize,
    /// Seed for randomized components (unused by the block scheme itself).
    pub seed: u64,
}

/// Opaque panel handle: n observations (rows) by p series (columns).
pub struct LrcovPanel {
    inner: TimeSeriesPanel,
}

/// Opaque fitted-estimator handle.
pub struct LrcovEstimate {
    fitted: ThresholdedCov,
    delta: f64,
    from_cv: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> LrcovStatus {
    match err {
        Error::Io { .. } => LrcovStatus::Io,
        Error::Parse { .. } => LrcovStatus::Parse,
        Error::Config(_) => LrcovStatus::Config,
        Error::Numerical(_) => LrcovStatus::Numerical,
    }
}

fn report(err: Error) -> LrcovStatus {
    set_error(&err.to_string());
    status_of(&err)
}

fn null_arg(name: &str) -> LrcovStatus {
    set_error(&format!("required argument {name} is NULL"));
    LrcovStatus::NullPointer
}

/// Run an FFI body behind a panic fence.
fn fenced(body: impl FnOnce() -> LrcovStatus) -> LrcovStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {text}"));
            LrcovStatus::Panic
        }
    }
}

/// Message for the most recent failure on this thread; empty string if no
/// failure has been recorded. The pointer is invalidated by the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn lrcov_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Wrap a caller-owned row-major buffer (`n_obs` rows of `n_series`
/// columns) into a panel handle. The data are copied.
///
/// # Safety
/// `data` must point to `n_obs * n_series` readable doubles and `out` to a
/// writable `LrcovPanel *` slot.
#[no_mangle]
pub unsafe extern "C" fn lrcov_panel_from_data(
    data: *const f64,
    n_obs: usize,
    n_series: usize,
    out: *mut *mut LrcovPanel,
) -> LrcovStatus {
    fenced(|| {
        if data.is_null() {
            return null_arg("data");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let len = match n_obs.checked_mul(n_series) {
            Some(len) if len > 0 => len,
            _ => {
                set_error(&format!(
                    "invalid panel shape {n_obs} x {n_series}"
                ));
                return LrcovStatus::Config;
            }
        };
        let slice = unsafe { std::slice::from_raw_parts(data, len) };
        let array = match Array2::from_shape_vec((n_obs, n_series), slice.to_vec()) {
            Ok(a) => a,
            Err(e) => {
                set_error(&format!("invalid panel shape: {e}"));
                return LrcovStatus::Config;
            }
        };
        match TimeSeriesPanel::new(array) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(LrcovPanel { inner })) };
                LrcovStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Load a panel from a CSV file (rows = time, columns = series, optional
/// single header line).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable
/// `LrcovPanel *` slot.
#[no_mangle]
pub unsafe extern "C" fn lrcov_panel_load_csv(
    path: *const c_char,
    out: *mut *mut LrcovPanel,
) -> LrcovStatus {
    fenced(|| {
        if path.is_null() {
            return null_arg("path");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let path = match unsafe { CStr::from_ptr(path) }.to_str() {
            Ok(s) => s,
            Err(_) => {
                set_error("path is not valid UTF-8");
                return LrcovStatus::Utf8;
            }
        };
        match panel::load_csv(std::path::Path::new(path)) {
            Ok(inner) => {
                unsafe { *out = Box::into_raw(Box::new(LrcovPanel { inner })) };
                LrcovStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Number of observations (rows); 0 for a NULL handle.
///
/// # Safety
/// `panel` must be NULL or a live panel handle.
#[no_mangle]
pub unsafe extern "C" fn lrcov_panel_rows(panel: *const LrcovPanel) -> usize {
    if panel.is_null() {
        return 0;
    }
    unsafe { &*panel }.inner.n_obs()
}

/// Number of series (columns); 0 for a NULL handle.
///
/// # Safety
/// `panel` must be NULL or a live panel handle.
#[no_mangle]
pub unsafe extern "C" fn lrcov_panel_cols(panel: *const LrcovPanel) -> usize {
    if panel.is_null() {
        return 0;
    }
    unsafe { &*panel }.inner.n_series()
}

/// Release a panel handle.
///
/// # Safety
/// `panel` must be NULL or an owned panel handle; the handle is invalid
/// after the call.
#[no_mangle]
pub unsafe extern "C" fn lrcov_panel_free(panel: *mut LrcovPanel) {
    if !panel.is_null() {
        drop(unsafe { Box::from_raw(panel) });
    }
}

/// Baseline options: proposed method, hard rule, cross-validated delta,
/// quadratic spectral kernel with the plug-in bandwidth, five blocks.
#[no_mangle]
pub extern "C" fn lrcov_estimate_options_default() -> LrcovEstimateOptions {
    LrcovEstimateOptions {
        method: LrcovMethod::Proposed,
        rule: LrcovRule::Hard,
        eta: 4.0,
        delta: -1.0,
        kernel: LrcovKernel::QuadraticSpectral,
        bandwidth: 0.0,
        threshold_diagonal: false,
        cv_blocks: 5,
        cv_buffer: 0,
        cv_grid_m: 10,
        seed: 0,
    }
}

fn build_spec(opts: &LrcovEstimateOptions) -> EstimatorSpec {
    let method = match opts.method {
        LrcovMethod::Proposed => Method::Proposed,
        LrcovMethod::Universal => Method::Universal,
        LrcovMethod::CaiLiu => Method::CaiLiu,
    };
    let rule = match opts.rule {
        LrcovRule::Hard => ThresholdRule::Hard,
        LrcovRule::Soft => ThresholdRule::Soft,
        LrcovRule::AdaptiveLasso => ThresholdRule::AdaptiveLasso { eta: opts.eta },
    };
    let kind = match opts.kernel {
        LrcovKernel::QuadraticSpectral => KernelKind::QuadraticSpectral,
        LrcovKernel::Bartlett => KernelKind::Bartlett,
        LrcovKernel::Parzen => KernelKind::Parzen,
        LrcovKernel::TukeyHanning => KernelKind::TukeyHanning,
    };
    let bandwidth = if opts.bandwidth > 0.0 {
        Bandwidth::Fixed(opts.bandwidth)
    } else {
        Bandwidth::Andrews
    };
    EstimatorSpec {
        method,
        rule,
        delta: 0.0,
        kernel: KernelSpec {
            kind,
            bandwidth,
        },
        threshold_diagonal: opts.threshold_diagonal,
    }
}

fn run_estimate(
    panel: &TimeSeriesPanel,
    opts: &LrcovEstimateOptions,
) -> Result<LrcovEstimate, Error> {
    let mut spec = build_spec(opts);
    spec.validate()?;
    let from_cv = opts.delta < 0.0;
    spec.delta = if from_cv {
        let cfg = BlockCvConfig {
            k_blocks: opts.cv_blocks,
            buffer: opts.cv_buffer,
            grid_m: opts.cv_grid_m,
            seed: opts.seed,
        };
        block_cv_delta(panel, &spec, &cfg)?.best_delta
    } else {
        opts.delta
    };
    let centered = panel.center();
    let cov = sample_cov_centered(&centered);
    let theta = match spec.method {
        Method::Proposed => Some(lrv_matrix(&centered, &spec.kernel)?),
        _ => None,
    };
    let theta_c = match spec.method {
        Method::CaiLiu => Some(cai_liu_variance(&centered, &cov.sigma)),
        _ => None,
    };
    let fitted = threshold_matrix(
        &cov,
        &spec,
        theta.as_ref(),
        theta_c.as_ref(),
        panel.n_series(),
    )?;
    Ok(LrcovEstimate {
        fitted,
        delta: spec.delta,
        from_cv,
    })
}

/// Fit a thresholded covariance estimator on the panel.
///
/// # Safety
/// `panel` must be a live panel handle, `options` a readable options
/// struct, and `out` a writable `LrcovEstimate *` slot.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate(
    panel: *const LrcovPanel,
    options: *const LrcovEstimateOptions,
    out: *mut *mut LrcovEstimate,
) -> LrcovStatus {
    fenced(|| {
        if panel.is_null() {
            return null_arg("panel");
        }
        if options.is_null() {
            return null_arg("options");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let panel = unsafe { &*panel };
        let opts = unsafe { &*options };
        match run_estimate(&panel.inner, opts) {
            Ok(est) => {
                unsafe { *out = Box::into_raw(Box::new(est)) };
                LrcovStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Matrix dimension p of a fitted estimate; 0 for a NULL handle.
///
/// # Safety
/// `est` must be NULL or a live estimate handle.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_dim(est: *const LrcovEstimate) -> usize {
    if est.is_null() {
        return 0;
    }
    unsafe { &*est }.fitted.estimate.dim()
}

/// Threshold constant the estimate was fitted with; NaN for a NULL handle.
///
/// # Safety
/// `est` must be NULL or a live estimate handle.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_delta(est: *const LrcovEstimate) -> f64 {
    if est.is_null() {
        return f64::NAN;
    }
    unsafe { &*est }.delta
}

/// Whether the threshold constant came from cross-validation (1) or was
/// fixed by the caller (0); 0 for a NULL handle.
///
/// # Safety
/// `est` must be NULL or a live estimate handle.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_delta_from_cv(est: *const LrcovEstimate) -> u8 {
    if est.is_null() {
        return 0;
    }
    u8::from(unsafe { &*est }.from_cv)
}

fn copy_matrix(m: &SymMatrix, out: *mut f64) {
    let p = m.dim();
    let dst = unsafe { std::slice::from_raw_parts_mut(out, p * p) };
    for i in 0..p {
        for j in 0..p {
            dst[i * p + j] = m.get(i, j);
        }
    }
}

/// Copy the thresholded covariance matrix into `out` (row-major, p*p
/// doubles, caller-allocated).
///
/// # Safety
/// `est` must be a live estimate handle and `out` writable for p*p doubles.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_matrix(
    est: *const LrcovEstimate,
    out: *mut f64,
) -> LrcovStatus {
    fenced(|| {
        if est.is_null() {
            return null_arg("est");
        }
        if out.is_null() {
            return null_arg("out");
        }
        copy_matrix(&unsafe { &*est }.fitted.estimate, out);
        LrcovStatus::Ok
    })
}

/// Copy the entry-wise thresholds lambda_ij into `out` (row-major, p*p
/// doubles, caller-allocated).
///
/// # Safety
/// `est` must be a live estimate handle and `out` writable for p*p doubles.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_thresholds(
    est: *const LrcovEstimate,
    out: *mut f64,
) -> LrcovStatus {
    fenced(|| {
        if est.is_null() {
            return null_arg("est");
        }
        if out.is_null() {
            return null_arg("out");
        }
        copy_matrix(&unsafe { &*est }.fitted.thresholds, out);
        LrcovStatus::Ok
    })
}

/// Copy the support mask into `out` (row-major, p*p bytes of 0/1,
/// caller-allocated).
///
/// # Safety
/// `est` must be a live estimate handle and `out` writable for p*p bytes.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_support(
    est: *const LrcovEstimate,
    out: *mut u8,
) -> LrcovStatus {
    fenced(|| {
        if est.is_null() {
            return null_arg("est");
        }
        if out.is_null() {
            return null_arg("out");
        }
        let support = &unsafe { &*est }.fitted.support;
        let p = support.dim();
        let dst = unsafe { std::slice::from_raw_parts_mut(out, p * p) };
        for i in 0..p {
            for j in 0..p {
                dst[i * p + j] = u8::from(support.get(i, j));
            }
        }
        LrcovStatus::Ok
    })
}

/// Release an estimate handle.
///
/// # Safety
/// `est` must be NULL or an owned estimate handle; the handle is invalid
/// after the call.
#[no_mangle]
pub unsafe extern "C" fn lrcov_estimate_free(est: *mut LrcovEstimate) {
    if !est.is_null() {
        drop(unsafe { Box::from_raw(est) });
    }
}

fn sym_from_raw(sigma: *const f64, p: usize) -> Result<SymMatrix, Error> {
    let src = unsafe { std::slice::from_raw_parts(sigma, p * p) };
    for i in 0..p {
        for j in 0..i {
            if src[i * p + j] != src[j * p + i] {
                return Err(Error::Config(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(SymMatrix::from_fn(p, |i, j| src[i * p + j]))
}

/// Global-minimum-variance weights of a positive definite covariance
/// matrix (`sigma` row-major p*p). Writes p doubles summing to one.
///
/// # Safety
/// `sigma` must point to p*p readable doubles and `out_weights` to p
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrcov_gmvp_weights(
    sigma: *const f64,
    p: usize,
    out_weights: *mut f64,
) -> LrcovStatus {
    fenced(|| {
        if sigma.is_null() {
            return null_arg("sigma");
        }
        if out_weights.is_null() {
            return null_arg("out_weights");
        }
        if p == 0 {
            set_error("dimension must be positive");
            return LrcovStatus::Config;
        }
        let m = match sym_from_raw(sigma, p) {
            Ok(m) => m,
            Err(e) => return report(e),
        };
        match gmvp_weights(&m) {
            Ok(w) => {
                let dst = unsafe { std::slice::from_raw_parts_mut(out_weights, p) };
                dst.copy_from_slice(&w);
                LrcovStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix
/// (`sigma` row-major p*p).
///
/// # Safety
/// `sigma` must point to p*p readable doubles and `out` to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn lrcov_spectral_norm(
    sigma: *const f64,
    p: usize,
    out: *mut f64,
) -> LrcovStatus {
    fenced(|| {
        if sigma.is_null() {
            return null_arg("sigma");
        }
        if out.is_null() {
            return null_arg("out");
        }
        if p == 0 {
            set_error("dimension must be positive");
            return LrcovStatus::Config;
        }
        let m = match sym_from_raw(sigma, p) {
            Ok(m) => m,
            Err(e) => return report(e),
        };
        match spectral_norm(&m) {
            Ok(v) => {
                unsafe { *out = v };
                LrcovStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}
