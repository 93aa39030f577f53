//! C ABI for `owadj`.
//!
//! Every fallible function returns an [`OwadjStatus`]; on failure the message
//! is available from [`owadj_last_error_message`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use owadj::estimators::Method;
use owadj::weighting::{max_weighted_difference, unit_weights};
use owadj::{
    fit_propensity, load_csv, Analysis, ColumnSchema, Error, EstimandKind, LogisticOptions, OutcomeKind, PropensityFit,
    TrialDataset, WeightingScheme,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwadjStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidDataset = 5,
    Separation = 6,
    RankDeficient = 7,
    NonConvergence = 8,
    DegenerateWeights = 9,
    BoundaryMean = 10,
    SingularMatrix = 11,
    EstimandRequiresBinary = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwadjEstimand {
    Rd = 0,
    LogRr = 1,
    LogOr = 2,
}

impl From<OwadjEstimand> for EstimandKind {
    fn from(e: OwadjEstimand) -> Self {
        match e {
            OwadjEstimand::Rd => EstimandKind::Rd,
            OwadjEstimand::LogRr => EstimandKind::LogRr,
            OwadjEstimand::LogOr => EstimandKind::LogOr,
        }
    }
}

/// Point estimate with its variance and normal-theory interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OwadjEstimate {
    pub point: f64,
    pub variance: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub p_value: f64,
    pub mu1: f64,
    pub mu0: f64,
}

/// Opaque trial dataset.
pub struct OwadjDataset(TrialDataset);

/// Opaque propensity fit.
pub struct OwadjPropensity(PropensityFit);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OwadjStatus {
    match e {
        Error::Io { .. } => OwadjStatus::Io,
        Error::Csv(_)
        | Error::EmptyFile
        | Error::MissingColumn(_)
        | Error::MissingValue { .. }
        | Error::NonNumeric { .. }
        | Error::TreatmentNotBinary { .. }
        | Error::Scenario(_) => OwadjStatus::Parse,
        Error::InvalidDataset(_) => OwadjStatus::InvalidDataset,
        Error::InvalidArgument(_) => OwadjStatus::InvalidArgument,
        Error::SeparationDetected { .. } => OwadjStatus::Separation,
        Error::RankDeficientDesign(_) => OwadjStatus::RankDeficient,
        Error::MaxIterationsExceeded { .. } | Error::OutcomeModelNonConvergence(_) => OwadjStatus::NonConvergence,
        Error::DegenerateWeights(_) => OwadjStatus::DegenerateWeights,
        Error::BoundaryMean { .. } => OwadjStatus::BoundaryMean,
        Error::SingularMatrix(_) => OwadjStatus::SingularMatrix,
        Error::EstimandRequiresBinary { .. } => OwadjStatus::EstimandRequiresBinary,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OwadjStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            OwadjStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            OwadjStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            OwadjStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::InvalidArgument(format!("{what} is not valid UTF-8"))))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn owadj_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn owadj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a dataset from arrays. `x` is row-major `n × p` and may be NULL
/// when `p == 0`. `binary` selects a binary outcome.
///
/// # Safety
/// `y` and `z` must point to `n` elements, `x` to `n * p`, `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn owadj_dataset_new(
    y: *const f64,
    z: *const u8,
    x: *const f64,
    n: usize,
    p: usize,
    binary: bool,
    out: *mut *mut OwadjDataset,
) -> OwadjStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if y.is_null() {
            return Err(Failure::Null("y"));
        }
        if z.is_null() {
            return Err(Failure::Null("z"));
        }
        if x.is_null() && p > 0 {
            return Err(Failure::Null("x"));
        }
        let y = std::slice::from_raw_parts(y, n).to_vec();
        let z = std::slice::from_raw_parts(z, n).to_vec();
        let xs = if p > 0 {
            std::slice::from_raw_parts(x, n * p)
        } else {
            &[]
        };
        let x = nalgebra::DMatrix::from_row_slice(n, p, xs);
        let kind = if binary {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        };
        let ds = TrialDataset::new(y, z, x, None, kind)?;
        *out = Box::into_raw(Box::new(OwadjDataset(ds)));
        Ok(())
    })
}

/// Loads a CSV file. `covariates` is a comma-separated list of column names
/// (empty for none).
///
/// # Safety
/// String arguments must be valid NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn owadj_dataset_load_csv(
    path: *const c_char,
    outcome: *const c_char,
    treatment: *const c_char,
    covariates: *const c_char,
    out: *mut *mut OwadjDataset,
) -> OwadjStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let path = str_arg(path, "path")?;
        let outcome = str_arg(outcome, "outcome")?;
        let treatment = str_arg(treatment, "treatment")?;
        let covs: Vec<&str> = str_arg(covariates, "covariates")?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let ds = load_csv(path, &ColumnSchema::new(outcome, treatment, &covs))?;
        *out = Box::into_raw(Box::new(OwadjDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn owadj_dataset_free(ds: *mut OwadjDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of units, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn owadj_dataset_n(ds: *const OwadjDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n())
}

/// Number of covariates, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn owadj_dataset_p(ds: *const OwadjDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.p())
}

/// Fits the logistic propensity model on all covariates.
///
/// # Safety
/// `ds` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn owadj_propensity_fit(ds: *const OwadjDataset, out: *mut *mut OwadjPropensity) -> OwadjStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let fit = fit_propensity(&ds.0, &LogisticOptions::default())?;
        *out = Box::into_raw(Box::new(OwadjPropensity(fit)));
        Ok(())
    })
}

/// Copies up to `len` fitted propensities into `buf`; returns the number of units.
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `len` values or be NULL.
#[no_mangle]
pub unsafe extern "C" fn owadj_propensity_scores(fit: *const OwadjPropensity, buf: *mut f64, len: usize) -> usize {
    let Some(fit) = fit.as_ref() else { return 0 };
    let e = &fit.0.e_hat;
    if !buf.is_null() {
        let k = len.min(e.len());
        ptr::copy_nonoverlapping(e.as_ptr(), buf, k);
    }
    e.len()
}

/// Copies up to `len` coefficients (intercept first) into `buf`; returns `p + 1`.
///
/// # Safety
/// `fit` must be a live handle; `buf` must hold `len` values or be NULL.
#[no_mangle]
pub unsafe extern "C" fn owadj_propensity_coefficients(
    fit: *const OwadjPropensity,
    buf: *mut f64,
    len: usize,
) -> usize {
    let Some(fit) = fit.as_ref() else { return 0 };
    let theta = &fit.0.theta;
    if !buf.is_null() {
        let k = len.min(theta.len());
        ptr::copy_nonoverlapping(theta.as_ptr(), buf, k);
    }
    theta.len()
}

/// # Safety
/// `fit` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn owadj_propensity_free(fit: *mut OwadjPropensity) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Estimates a treatment effect. `method` is one of `unadj`, `ipw`, `ow`,
/// `att`, `mw`, `lr`, `aipw`.
///
/// # Safety
/// `ds` must be a live handle, `method` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn owadj_estimate(
    ds: *const OwadjDataset,
    method: *const c_char,
    estimand: OwadjEstimand,
    level: f64,
    out: *mut OwadjEstimate,
) -> OwadjStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let method: Method = str_arg(method, "method")?.parse()?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")).into());
        }
        let est = Analysis::new(&ds.0)
            .estimate(&method, estimand.into())?
            .with_level(level);
        *out = OwadjEstimate {
            point: est.point,
            variance: est.variance,
            se: est.se,
            ci_lo: est.ci.0,
            ci_hi: est.ci.1,
            p_value: est.p_value,
            mu1: est.mu1,
            mu0: est.mu0,
        };
        Ok(())
    })
}

/// Largest absolute weighted difference in covariate means between arms
/// under `scheme` (`ipw`, `ow`, `att`, `mw`).
///
/// # Safety
/// `ds` must be a live handle, `scheme` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn owadj_max_balance_difference(
    ds: *const OwadjDataset,
    scheme: *const c_char,
    out: *mut f64,
) -> OwadjStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let scheme: WeightingScheme = str_arg(scheme, "scheme")?.parse()?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let fit = fit_propensity(&ds.0, &LogisticOptions::default())?;
        let w = unit_weights(&scheme, &fit.e_hat, ds.0.z())?;
        *out = max_weighted_difference(&ds.0, &w, ds.0.covariate_names())?;
        Ok(())
    })
}
