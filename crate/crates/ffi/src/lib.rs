//! C interface to the variable-selection sampler: fit a model from a CSV
//! file or an in-memory matrix, then query inclusion probabilities, predict
//! new rows, or save the chain.
//!
//! Conventions:
//! - Every fallible call returns a [`BvsStatus`]; anything other than `Ok`
//!   leaves a message retrievable with [`bvs_last_error`].
//! - A successful `bvs_fit_*` call writes an owned handle to `out`; release
//!   it with [`bvs_fit_free`]. All other `bvs_fit_*` functions only borrow
//!   the handle.
//! - Matrices are row-major and contiguous: element `(i, j)` of an
//!   `n_rows x n_cols` matrix lives at `x[i * n_cols + j]`.
//! - Handles are not thread-safe; use one handle from one thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use bvs::data::{load_csv, Dataset, ResponseColumn};
use bvs::error::BvsError;
use bvs::fit::{fit_dataset, FitOutput, FitSettings};
use bvs::predict::{predictive_mean, summarize};
use bvs::sampler::write_chain_csv;

/// Result of a C-interface call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvsStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The data or configuration was rejected.
    InvalidArgument = 3,
    /// A file could not be read or written.
    IoError = 4,
    /// A numeric failure stopped the computation.
    NumericError = 5,
    /// An internal error was caught at the boundary.
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).expect("nul bytes removed");
    });
}

fn error_status(e: &BvsError) -> BvsStatus {
    set_error(&e.to_string());
    match e {
        BvsError::Validation(_) => BvsStatus::InvalidArgument,
        BvsError::Io { .. } => BvsStatus::IoError,
        BvsError::Numeric(_) => BvsStatus::NumericError,
    }
}

/// Message for the most recent non-`Ok` status on this thread, empty if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bvs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// The library version as a static string.
#[no_mangle]
pub extern "C" fn bvs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// A fitted model: the standardized data, resolved prior, and retained chain.
pub struct BvsFit {
    fit: FitOutput,
    inclusion: Vec<f64>,
    mean_size: f64,
}

fn guarded(f: impl FnOnce() -> BvsStatus) -> BvsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic caught at the C boundary");
            BvsStatus::InternalError
        }
    }
}

/// # Safety
/// `ptr` must be non-null (checked) and point to a NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, BvsStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} must not be null"));
        return Err(BvsStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        BvsStatus::InvalidUtf8
    })
}

fn parse_settings(toml_text: Option<&str>) -> Result<FitSettings, BvsStatus> {
    match toml_text {
        None | Some("") => Ok(FitSettings::default()),
        Some(text) => FitSettings::from_toml(text).map_err(|e| error_status(&e)),
    }
}

fn finish_fit(dataset: &Dataset, settings: &FitSettings, out: *mut *mut BvsFit) -> BvsStatus {
    let fit = match fit_dataset(dataset, settings) {
        Ok(fit) => fit,
        Err(e) => return error_status(&e),
    };
    let summary = match summarize(&fit.chain, 1) {
        Ok(s) => s,
        Err(e) => return error_status(&e),
    };
    let handle = Box::new(BvsFit {
        fit,
        inclusion: summary.inclusion_probabilities,
        mean_size: summary.mean_size,
    });
    unsafe { *out = Box::into_raw(handle) };
    BvsStatus::Ok
}

/// Fit a model to a CSV file with a header row; `response_name` picks the
/// response column and every other column is a predictor. `settings_toml`
/// may be null or empty for the defaults, or TOML with optional `[prior]`,
/// `[proposal]`, and `[chain]` sections.
///
/// # Safety
/// `csv_path`, `response_name`, and (when non-null) `settings_toml` must be
/// NUL-terminated strings; `out` must be a valid location to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_csv(
    csv_path: *const c_char,
    response_name: *const c_char,
    settings_toml: *const c_char,
    out: *mut *mut BvsFit,
) -> BvsStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out must not be null");
            return BvsStatus::NullArgument;
        }
        let path = match required_str(csv_path, "csv_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let response = match required_str(response_name, "response_name") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let settings_text = if settings_toml.is_null() {
            None
        } else {
            match required_str(settings_toml, "settings_toml") {
                Ok(s) => Some(s),
                Err(status) => return status,
            }
        };
        let settings = match parse_settings(settings_text) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let dataset = match load_csv(
            Path::new(path),
            &ResponseColumn::Name(response.to_string()),
            true,
        ) {
            Ok(d) => d,
            Err(e) => return error_status(&e),
        };
        finish_fit(&dataset, &settings, out)
    })
}

/// Fit a model to an in-memory design matrix (row-major `n_rows x n_cols`)
/// and response vector of length `n_rows`. Predictors are named
/// `x1..x<n_cols>`. `settings_toml` is as in [`bvs_fit_csv`].
///
/// # Safety
/// `x` must point to `n_rows * n_cols` doubles, `y` to `n_rows` doubles;
/// `settings_toml` when non-null must be a NUL-terminated string; `out` must
/// be a valid location to store a pointer.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_matrix(
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    y: *const f64,
    settings_toml: *const c_char,
    out: *mut *mut BvsFit,
) -> BvsStatus {
    guarded(|| {
        if out.is_null() || x.is_null() || y.is_null() {
            set_error("x, y, and out must not be null");
            return BvsStatus::NullArgument;
        }
        let len = match n_rows.checked_mul(n_cols) {
            Some(len) if len > 0 => len,
            _ => {
                set_error("matrix dimensions must be positive and not overflow");
                return BvsStatus::InvalidArgument;
            }
        };
        let settings_text = if settings_toml.is_null() {
            None
        } else {
            match required_str(settings_toml, "settings_toml") {
                Ok(s) => Some(s),
                Err(status) => return status,
            }
        };
        let settings = match parse_settings(settings_text) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let x = std::slice::from_raw_parts(x, len);
        let y = std::slice::from_raw_parts(y, n_rows);
        let dataset = match Dataset::with_default_names(
            DMatrix::from_row_slice(n_rows, n_cols, x),
            DVector::from_column_slice(y),
        ) {
            Ok(d) => d,
            Err(e) => return error_status(&e),
        };
        finish_fit(&dataset, &settings, out)
    })
}

/// Release a handle returned by a `bvs_fit_*` call. Null is a no-op.
///
/// # Safety
/// `fit` must be a pointer previously returned through the `out` argument of
/// a fitting call, and must not be used again afterwards.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_free(fit: *mut BvsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of predictor columns, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_predictor_count(fit: *const BvsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.standardized.p())
}

/// Number of retained posterior draws, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_sample_count(fit: *const BvsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.chain.samples.len())
}

/// Fraction of proposals accepted, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_acceptance_rate(fit: *const BvsFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.fit.chain.acceptance_rate)
}

/// Number of proposals rejected because they could not be evaluated
/// numerically, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_numeric_rejections(fit: *const BvsFit) -> u64 {
    fit.as_ref().map_or(0, |f| f.fit.chain.numeric_rejections)
}

/// Posterior mean number of active predictors, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_mean_model_size(fit: *const BvsFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.mean_size)
}

/// Copy the per-predictor posterior inclusion probabilities into `out`,
/// which must hold at least `bvs_fit_predictor_count` doubles.
///
/// # Safety
/// `fit` must be a live fit handle; `out` must point to `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_inclusion_probabilities(
    fit: *const BvsFit,
    out: *mut f64,
    capacity: usize,
) -> BvsStatus {
    guarded(|| {
        let (Some(f), false) = (fit.as_ref(), out.is_null()) else {
            set_error("fit and out must not be null");
            return BvsStatus::NullArgument;
        };
        if capacity < f.inclusion.len() {
            set_error(&format!(
                "capacity {} is too small for {} predictors",
                capacity,
                f.inclusion.len()
            ));
            return BvsStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(f.inclusion.as_ptr(), out, f.inclusion.len());
        BvsStatus::Ok
    })
}

/// Posterior-mean predictions for `n_rows` new observations given as a
/// row-major `n_rows x n_cols` matrix in the original (unstandardized)
/// predictor units, with `n_cols == bvs_fit_predictor_count`. Writes
/// `n_rows` doubles to `out`, on the original response scale.
///
/// # Safety
/// `fit` must be a live fit handle; `x` must point to `n_rows * n_cols`
/// doubles and `out` to `n_rows` doubles.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_predict(
    fit: *const BvsFit,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> BvsStatus {
    guarded(|| {
        let (Some(f), false, false) = (fit.as_ref(), x.is_null(), out.is_null()) else {
            set_error("fit, x, and out must not be null");
            return BvsStatus::NullArgument;
        };
        let p = f.fit.standardized.p();
        if n_cols != p {
            set_error(&format!("prediction rows have {n_cols} columns, model has {p}"));
            return BvsStatus::InvalidArgument;
        }
        let len = match n_rows.checked_mul(n_cols) {
            Some(len) if len > 0 => len,
            _ => {
                set_error("matrix dimensions must be positive and not overflow");
                return BvsStatus::InvalidArgument;
            }
        };
        let raw = DMatrix::from_row_slice(n_rows, n_cols, std::slice::from_raw_parts(x, len));
        let standardized = match f.fit.standardized.apply_transform(&raw) {
            Ok(m) => m,
            Err(e) => return error_status(&e),
        };
        let centered = match predictive_mean(&f.fit.chain.samples, &standardized) {
            Ok(v) => v,
            Err(e) => return error_status(&e),
        };
        for (i, v) in centered.iter().enumerate() {
            *out.add(i) = f.fit.standardized.add_response_mean(*v);
        }
        BvsStatus::Ok
    })
}

/// Write the retained chain to `path` in the library's chain file format.
///
/// # Safety
/// `fit` must be a live fit handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bvs_fit_save_chain(
    fit: *const BvsFit,
    path: *const c_char,
) -> BvsStatus {
    guarded(|| {
        let Some(f) = fit.as_ref() else {
            set_error("fit must not be null");
            return BvsStatus::NullArgument;
        };
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match write_chain_csv(&f.fit.chain, Path::new(path)) {
            Ok(()) => BvsStatus::Ok,
            Err(e) => error_status(&e),
        }
    })
}
