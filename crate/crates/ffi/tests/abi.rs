use std::ffi::{CStr, CString};
use std::ptr;

use owadj_ffi::*;

fn toy(binary: bool) -> *mut OwadjDataset {
    let y = [1.0, 3.0, 2.0, 4.0];
    let yb = [1.0, 1.0, 0.0, 1.0];
    let z = [1u8, 1, 0, 0];
    let x = [0.5, 1.5, -0.5, 2.0];
    let mut ds = ptr::null_mut();
    let ys = if binary { yb.as_ptr() } else { y.as_ptr() };
    let st = unsafe { owadj_dataset_new(ys, z.as_ptr(), x.as_ptr(), 4, 1, binary, &mut ds) };
    assert_eq!(st, OwadjStatus::Ok);
    ds
}

fn last_error() -> String {
    let p = owadj_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(owadj_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn unadjusted_toy_estimate() {
    let ds = toy(false);
    let m = CString::new("unadj").unwrap();
    let mut est = OwadjEstimate::default();
    let st = unsafe { owadj_estimate(ds, m.as_ptr(), OwadjEstimand::Rd, 0.95, &mut est) };
    assert_eq!(st, OwadjStatus::Ok);
    assert_eq!(est.point, -1.0);
    assert_eq!((est.mu1, est.mu0), (2.0, 3.0));
    assert!(est.ci_lo < est.point && est.point < est.ci_hi);
    assert!(owadj_last_error_message().is_null());
    unsafe {
        assert_eq!(owadj_dataset_n(ds), 4);
        assert_eq!(owadj_dataset_p(ds), 1);
        owadj_dataset_free(ds);
    }
}

#[test]
fn ratio_estimand_on_continuous_outcome() {
    let ds = toy(false);
    let m = CString::new("ow").unwrap();
    let mut est = OwadjEstimate::default();
    let st = unsafe { owadj_estimate(ds, m.as_ptr(), OwadjEstimand::LogRr, 0.95, &mut est) };
    assert_eq!(st, OwadjStatus::EstimandRequiresBinary);
    assert!(last_error().contains("requires binary outcome"));
    unsafe { owadj_dataset_free(ds) };
}

#[test]
fn boundary_mean_is_reported() {
    let ds = toy(true);
    let m = CString::new("unadj").unwrap();
    let mut est = OwadjEstimate::default();
    let st = unsafe { owadj_estimate(ds, m.as_ptr(), OwadjEstimand::LogOr, 0.95, &mut est) };
    assert_eq!(st, OwadjStatus::BoundaryMean);
    unsafe { owadj_dataset_free(ds) };
}

#[test]
fn null_and_invalid_arguments() {
    let mut est = OwadjEstimate::default();
    let m = CString::new("ow").unwrap();
    let st = unsafe { owadj_estimate(ptr::null(), m.as_ptr(), OwadjEstimand::Rd, 0.95, &mut est) };
    assert_eq!(st, OwadjStatus::NullPointer);
    assert!(last_error().contains("dataset"));

    let ds = toy(false);
    let bad = CString::new("nope").unwrap();
    let st = unsafe { owadj_estimate(ds, bad.as_ptr(), OwadjEstimand::Rd, 0.95, &mut est) };
    assert_eq!(st, OwadjStatus::InvalidArgument);
    let st = unsafe { owadj_estimate(ds, m.as_ptr(), OwadjEstimand::Rd, 1.5, &mut est) };
    assert_eq!(st, OwadjStatus::InvalidArgument);
    unsafe { owadj_dataset_free(ds) };
    unsafe { owadj_dataset_free(ptr::null_mut()) };
}

#[test]
fn invalid_dataset_status() {
    let y = [1.0, 2.0];
    let z = [1u8, 1];
    let mut ds = ptr::null_mut();
    let st = unsafe { owadj_dataset_new(y.as_ptr(), z.as_ptr(), ptr::null(), 2, 0, false, &mut ds) };
    assert_ne!(st, OwadjStatus::Ok);
    assert!(ds.is_null());
}

#[test]
fn propensity_handle_and_balance() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/synthetic_trial.csv");
    let c = |s: &str| CString::new(s).unwrap();
    let (p, o, t, x) = (
        c(path),
        c("sbp6"),
        c("cpap"),
        c("age,male,white,site1,bmi,sbp0,sdp0,ahi0,ess0"),
    );
    let mut ds = ptr::null_mut();
    let st = unsafe { owadj_dataset_load_csv(p.as_ptr(), o.as_ptr(), t.as_ptr(), x.as_ptr(), &mut ds) };
    assert_eq!(st, OwadjStatus::Ok);

    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { owadj_propensity_fit(ds, &mut fit) }, OwadjStatus::Ok);
    let n = unsafe { owadj_propensity_scores(fit, ptr::null_mut(), 0) };
    assert_eq!(n, 169);
    let mut e = vec![0.0; n];
    unsafe { owadj_propensity_scores(fit, e.as_mut_ptr(), n) };
    assert!(e.iter().all(|&v| v > 0.0 && v < 1.0));
    let mut theta = vec![0.0; 10];
    assert_eq!(
        unsafe { owadj_propensity_coefficients(fit, theta.as_mut_ptr(), 10) },
        10
    );

    let mut diff = f64::NAN;
    let ow = c("ow");
    assert_eq!(
        unsafe { owadj_max_balance_difference(ds, ow.as_ptr(), &mut diff) },
        OwadjStatus::Ok
    );
    assert!(diff <= 1e-8);
    unsafe {
        owadj_propensity_free(fit);
        owadj_dataset_free(ds);
    }
}

#[test]
fn missing_file_is_io_error() {
    let c = |s: &str| CString::new(s).unwrap();
    let (p, o, t, x) = (c("/nonexistent/trial.csv"), c("y"), c("z"), c(""));
    let mut ds = ptr::null_mut();
    let st = unsafe { owadj_dataset_load_csv(p.as_ptr(), o.as_ptr(), t.as_ptr(), x.as_ptr(), &mut ds) };
    assert_eq!(st, OwadjStatus::Io);
}
