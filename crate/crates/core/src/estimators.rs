//! Point estimators of additive and ratio estimands: unadjusted, balancing
//! weights, ANCOVA / outcome regression with standardization, and AIPW.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::dataset::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::propensity::{expit, fit_logistic_design, fit_propensity, LogisticOptions, PropensityFit};
use crate::variance::{self, confidence_interval, two_sided_p_value, IpwForm, OwVarianceForm};
use crate::weighting::{hajek_means, unit_weights, WeightingScheme};

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EstimandKind {
    #[serde(rename = "RD")]
    Rd,
    #[serde(rename = "logRR")]
    LogRr,
    #[serde(rename = "logOR")]
    LogOr,
}

impl EstimandKind {
    pub const ALL: [EstimandKind; 3] = [EstimandKind::Rd, EstimandKind::LogRr, EstimandKind::LogOr];

    pub fn is_ratio(self) -> bool {
        !matches!(self, EstimandKind::Rd)
    }

    pub fn label(self) -> &'static str {
        match self {
            EstimandKind::Rd => "RD",
            EstimandKind::LogRr => "logRR",
            EstimandKind::LogOr => "logOR",
        }
    }

    /// Maps arm means to the estimand scale.
    pub fn transform(self, mu1: f64, mu0: f64) -> Result<f64> {
        match self {
            EstimandKind::Rd => Ok(mu1 - mu0),
            _ if !(mu1 > 0.0 && mu1 < 1.0 && mu0 > 0.0 && mu0 < 1.0) => Err(Error::BoundaryMean { mu1, mu0 }),
            EstimandKind::LogRr => Ok((mu1 / mu0).ln()),
            EstimandKind::LogOr => Ok((mu1 * (1.0 - mu0)).ln() - (mu0 * (1.0 - mu1)).ln()),
        }
    }
}

impl fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rd" | "ate" => Ok(EstimandKind::Rd),
            "logrr" | "rr" => Ok(EstimandKind::LogRr),
            "logor" | "or" => Ok(EstimandKind::LogOr),
            other => Err(Error::InvalidArgument(format!("unknown estimand '{other}'"))),
        }
    }
}

/// Point estimate with its variance and Wald interval.
#[derive(Debug, Clone, Serialize)]
pub struct EffectEstimate {
    pub method: String,
    pub estimand: EstimandKind,
    pub point: f64,
    pub variance: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub p_value: f64,
    pub mu1: f64,
    pub mu0: f64,
    pub diagnostics: Vec<String>,
}

impl EffectEstimate {
    pub fn new(method: &str, estimand: EstimandKind, mu1: f64, mu0: f64, point: f64, variance: f64) -> Self {
        let variance = variance.max(0.0);
        EffectEstimate {
            method: method.to_string(),
            estimand,
            point,
            variance,
            se: variance.sqrt(),
            ci: confidence_interval(point, variance, DEFAULT_LEVEL),
            level: DEFAULT_LEVEL,
            p_value: two_sided_p_value(point, variance),
            mu1,
            mu0,
            diagnostics: Vec::new(),
        }
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self.ci = confidence_interval(self.point, self.variance, level);
        self
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci.0 <= truth && truth <= self.ci.1
    }
}

/// Estimation method compared in the simulations and the CLI.
#[derive(Clone)]
pub enum Method {
    Unadjusted,
    Weighting(WeightingScheme),
    /// ANCOVA II for continuous outcomes; logistic regression with
    /// standardization for binary outcomes.
    OutcomeRegression,
    Aipw,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Unadjusted => "UNADJ".into(),
            Method::Weighting(s) => s.label().to_string(),
            Method::OutcomeRegression => "LR".into(),
            Method::Aipw => "AIPW".into(),
        }
    }

    /// UNADJ, IPW, LR, AIPW, OW.
    pub fn standard_set() -> Vec<Method> {
        vec![
            Method::Unadjusted,
            Method::Weighting(WeightingScheme::Ipw),
            Method::OutcomeRegression,
            Method::Aipw,
            Method::Weighting(WeightingScheme::Overlap),
        ]
    }
}

impl fmt::Debug for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl PartialEq for Method {
    fn eq(&self, other: &Self) -> bool {
        self.label() == other.label()
    }
}

impl Serialize for Method {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unadj" | "unadjusted" => Ok(Method::Unadjusted),
            "lr" | "ancova" | "regression" => Ok(Method::OutcomeRegression),
            "aipw" => Ok(Method::Aipw),
            other => other
                .parse::<WeightingScheme>()
                .map(Method::Weighting)
                .map_err(|_| Error::InvalidArgument(format!("unknown method '{s}'"))),
        }
    }
}

/// Arm sample means and their difference.
pub fn estimate_unadjusted(ds: &TrialDataset) -> (f64, f64, f64) {
    let (mu1, mu0) = hajek_means(ds.y(), ds.z(), &vec![1.0; ds.n()]).expect("validated dataset has both arms");
    (mu1, mu0, mu1 - mu0)
}

/// Difference in means with the two-sample variance `Σ₁(Y−μ̂₁)²/N₁² + Σ₀(Y−μ̂₀)²/N₀²`.
pub fn unadjusted_effect(ds: &TrialDataset, estimand: EstimandKind) -> Result<EffectEstimate> {
    let (mu1, mu0, _) = estimate_unadjusted(ds);
    let point = estimand.transform(mu1, mu0)?;
    let (n1, n0) = (ds.n_treated() as f64, ds.n_control() as f64);
    let (mut s1, mut s0) = (0.0, 0.0);
    for (&y, &z) in ds.y().iter().zip(ds.z()) {
        if z == 1 {
            s1 += (y - mu1).powi(2);
        } else {
            s0 += (y - mu0).powi(2);
        }
    }
    let sigma = nalgebra::Matrix2::new(s1 / (n1 * n1), 0.0, 0.0, s0 / (n0 * n0));
    let var = variance::delta_ratio(mu1, mu0, &sigma, estimand)?;
    Ok(EffectEstimate::new("UNADJ", estimand, mu1, mu0, point, var))
}

/// Balancing-weights (Hájek) estimator with sandwich variance.
///
/// OW uses the closed-form variance; other schemes use the stacked sandwich.
pub fn estimate_weighted(
    ds: &TrialDataset,
    scheme: &WeightingScheme,
    estimand: EstimandKind,
    fit: &PropensityFit,
) -> Result<EffectEstimate> {
    estimate_weighted_with(ds, scheme, estimand, fit, OwVarianceForm::default())
}

pub fn estimate_weighted_with(
    ds: &TrialDataset,
    scheme: &WeightingScheme,
    estimand: EstimandKind,
    fit: &PropensityFit,
    ow_form: OwVarianceForm,
) -> Result<EffectEstimate> {
    check_estimand(ds, estimand)?;
    let w = unit_weights(scheme, &fit.e_hat, ds.z())?;
    let (mu1, mu0) = hajek_means(ds.y(), ds.z(), &w)?;
    let point = estimand.transform(mu1, mu0)?;
    let var = match scheme {
        WeightingScheme::Overlap => variance::ow_sandwich_variance_with(ds, fit, mu1, mu0, estimand, ow_form)?,
        _ => variance::balancing_stacked_variance(ds, fit, scheme, mu1, mu0, estimand)?,
    };
    Ok(EffectEstimate::new(scheme.label(), estimand, mu1, mu0, point, var))
}

fn check_estimand(ds: &TrialDataset, estimand: EstimandKind) -> Result<()> {
    if estimand.is_ratio() && ds.outcome_kind() != OutcomeKind::Binary {
        return Err(Error::EstimandRequiresBinary {
            estimand: estimand.label().to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logit,
}

impl Link {
    #[inline]
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Logit => expit(eta),
        }
    }

    /// dμ/dη
    #[inline]
    pub fn derivative(self, eta: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logit => {
                let m = expit(eta);
                m * (1.0 - m)
            }
        }
    }
}

/// Outcome regression on the uncentered design `(1, Z, X[, Z·X])`, with the
/// counterfactual designs at `Z = 1` and `Z = 0` for every unit.
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    pub link: Link,
    pub coef: Vec<f64>,
    pub design: DMatrix<f64>,
    pub design_treated: DMatrix<f64>,
    pub design_control: DMatrix<f64>,
}

impl OutcomeModel {
    /// Fitted conditional means `μ̂_z(Xᵢ)` for every unit.
    pub fn fitted_means(&self, arm: u8) -> Vec<f64> {
        let d = if arm == 1 {
            &self.design_treated
        } else {
            &self.design_control
        };
        let b = DVector::from_column_slice(&self.coef);
        (d * b).iter().map(|&eta| self.link.mean(eta)).collect()
    }

    pub fn dim(&self) -> usize {
        self.coef.len()
    }
}

/// Builds `(1, z, X[, z·X])` rows, with `z` taken from `arm` when given.
fn outcome_design(x: &DMatrix<f64>, z: &[u8], arm: Option<u8>, interactions: bool) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let q = 2 + p + if interactions { p } else { 0 };
    let mut d = DMatrix::<f64>::zeros(n, q);
    for i in 0..n {
        let zi = f64::from(arm.unwrap_or(z[i]));
        d[(i, 0)] = 1.0;
        d[(i, 1)] = zi;
        for j in 0..p {
            d[(i, 2 + j)] = x[(i, j)];
            if interactions {
                d[(i, 2 + p + j)] = zi * x[(i, j)];
            }
        }
    }
    d
}

/// Least-squares ANCOVA fit. Covariates are centered at full-sample means,
/// so the treatment coefficient (index 1) targets the average effect.
#[derive(Debug, Clone)]
pub struct AncovaFit {
    pub with_interactions: bool,
    /// Coefficients on the centered design `(1, Z, Xc[, Z·Xc])`.
    pub coef: Vec<f64>,
    pub design: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub x_means: Vec<f64>,
    /// `μ̂₁(Xᵢ)` and `μ̂₀(Xᵢ)`.
    pub mu1_x: Vec<f64>,
    pub mu0_x: Vec<f64>,
}

impl AncovaFit {
    pub fn treatment_effect(&self) -> f64 {
        self.coef[1]
    }

    /// Same fitted surface expressed on the uncentered design.
    pub fn outcome_model(&self, ds: &TrialDataset) -> OutcomeModel {
        let p = ds.p();
        let mut coef = self.coef.clone();
        for j in 0..p {
            coef[0] -= self.coef[2 + j] * self.x_means[j];
            if self.with_interactions {
                coef[1] -= self.coef[2 + p + j] * self.x_means[j];
            }
        }
        let x = ds.x();
        OutcomeModel {
            link: Link::Identity,
            coef,
            design: outcome_design(x, ds.z(), None, self.with_interactions),
            design_treated: outcome_design(x, ds.z(), Some(1), self.with_interactions),
            design_control: outcome_design(x, ds.z(), Some(0), self.with_interactions),
        }
    }
}

fn centered(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (xc, means)
}

/// ANCOVA I (`with_interactions = false`) or ANCOVA II.
pub fn fit_ancova(ds: &TrialDataset, with_interactions: bool) -> Result<AncovaFit> {
    let (xc, x_means) = centered(ds.x());
    let design = outcome_design(&xc, ds.z(), None, with_interactions);
    let y = DVector::from_column_slice(ds.y());
    let (beta, xtx_inv) = least_squares(&design, &y).map_err(|j| {
        Error::RankDeficientDesign(format!(
            "ANCOVA design column {j} of {} is collinear (N = {})",
            design.ncols(),
            ds.n()
        ))
    })?;
    let fitted = &design * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let d1 = outcome_design(&xc, ds.z(), Some(1), with_interactions);
    let d0 = outcome_design(&xc, ds.z(), Some(0), with_interactions);
    Ok(AncovaFit {
        with_interactions,
        coef: beta.iter().copied().collect(),
        mu1_x: (&d1 * &beta).iter().copied().collect(),
        mu0_x: (&d0 * &beta).iter().copied().collect(),
        design,
        xtx_inv,
        residuals,
        x_means,
    })
}

/// Logistic outcome model of `Y` on `(1, Z, X, Z·X)`.
pub fn fit_outcome_logistic(ds: &TrialDataset, opts: &LogisticOptions) -> Result<OutcomeModel> {
    let x = ds.x();
    let design = outcome_design(x, ds.z(), None, true);
    let mut names = vec!["(intercept)".to_string(), "Z".to_string()];
    names.extend(ds.covariate_names().iter().cloned());
    names.extend(ds.covariate_names().iter().map(|c| format!("Z:{c}")));
    let fit = fit_logistic_design(&design, ds.y(), &names, opts)
        .map_err(|e| Error::OutcomeModelNonConvergence(e.to_string()))?;
    Ok(OutcomeModel {
        link: Link::Logit,
        coef: fit.coef,
        design_treated: outcome_design(x, ds.z(), Some(1), true),
        design_control: outcome_design(x, ds.z(), Some(0), true),
        design,
    })
}

/// Fits the outcome model matching the outcome kind: ANCOVA II or logistic.
pub fn fit_outcome_model(ds: &TrialDataset) -> Result<OutcomeModel> {
    match ds.outcome_kind() {
        OutcomeKind::Continuous => Ok(fit_ancova(ds, true)?.outcome_model(ds)),
        OutcomeKind::Binary => fit_outcome_logistic(ds, &LogisticOptions::default()),
    }
}

/// Standardized arm means `N⁻¹ Σᵢ μ̂_z(Xᵢ)`.
pub fn standardized_means(model: &OutcomeModel) -> (f64, f64) {
    let m1 = model.fitted_means(1);
    let m0 = model.fitted_means(0);
    let n = m1.len() as f64;
    (m1.iter().sum::<f64>() / n, m0.iter().sum::<f64>() / n)
}

/// LR estimator: ANCOVA II with HC0 variance (continuous), or logistic
/// regression with standardization and sandwich variance (binary).
pub fn estimate_outcome_regression(ds: &TrialDataset, estimand: EstimandKind) -> Result<EffectEstimate> {
    check_estimand(ds, estimand)?;
    match ds.outcome_kind() {
        OutcomeKind::Continuous => {
            let fit = fit_ancova(ds, true)?;
            let var = variance::huber_white_ancova(&fit)?;
            let (mu1, mu0) = mean_pair(&fit.mu1_x, &fit.mu0_x);
            Ok(EffectEstimate::new(
                "LR",
                estimand,
                mu1,
                mu0,
                fit.treatment_effect(),
                var,
            ))
        }
        OutcomeKind::Binary => {
            let model = fit_outcome_logistic(ds, &LogisticOptions::default())?;
            let (mu1, mu0) = standardized_means(&model);
            let point = estimand.transform(mu1, mu0)?;
            let var = variance::standardization_variance(ds, &model, mu1, mu0, estimand)?;
            Ok(EffectEstimate::new("LR", estimand, mu1, mu0, point, var))
        }
    }
}

fn mean_pair(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n)
}

/// AIPW arm means from propensities and arbitrary conditional-mean predictions.
pub fn aipw_means(y: &[f64], z: &[u8], e: &[f64], m1: &[f64], m0: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let (mut s1, mut s0) = (0.0, 0.0);
    for i in 0..y.len() {
        let zi = f64::from(z[i]);
        s1 += zi * y[i] / e[i] - (zi - e[i]) * m1[i] / e[i];
        s0 += (1.0 - zi) * y[i] / (1.0 - e[i]) + (zi - e[i]) * m0[i] / (1.0 - e[i]);
    }
    (s1 / n, s0 / n)
}

/// Augmented IPW estimator with stacked-sandwich variance.
pub fn estimate_aipw(
    ds: &TrialDataset,
    fit: &PropensityFit,
    outcome: &OutcomeModel,
    estimand: EstimandKind,
) -> Result<EffectEstimate> {
    check_estimand(ds, estimand)?;
    let m1 = outcome.fitted_means(1);
    let m0 = outcome.fitted_means(0);
    let (mu1, mu0) = aipw_means(ds.y(), ds.z(), &fit.e_hat, &m1, &m0);
    let point = estimand.transform(mu1, mu0)?;
    let var = variance::aipw_variance(ds, fit, Some(outcome), mu1, mu0, estimand)?;
    Ok(EffectEstimate::new("AIPW", estimand, mu1, mu0, point, var))
}

/// Horvitz–Thompson IPW (AIPW with zero augmentation), mainly as a reference.
pub fn estimate_ipw_horvitz_thompson(
    ds: &TrialDataset,
    fit: &PropensityFit,
    estimand: EstimandKind,
) -> Result<EffectEstimate> {
    check_estimand(ds, estimand)?;
    let zero = vec![0.0; ds.n()];
    let (mu1, mu0) = aipw_means(ds.y(), ds.z(), &fit.e_hat, &zero, &zero);
    let point = estimand.transform(mu1, mu0)?;
    let var = variance::ipw_variance(ds, fit, IpwForm::HorvitzThompson, mu1, mu0, estimand)?;
    Ok(EffectEstimate::new("IPW-HT", estimand, mu1, mu0, point, var))
}

/// Runs several methods on one dataset, sharing the propensity and outcome fits.
pub struct Analysis<'a> {
    ds: &'a TrialDataset,
    propensity: Option<std::result::Result<PropensityFit, String>>,
    outcome: Option<std::result::Result<OutcomeModel, String>>,
    pub logistic: LogisticOptions,
    pub ow_form: OwVarianceForm,
}

impl<'a> Analysis<'a> {
    pub fn new(ds: &'a TrialDataset) -> Self {
        Analysis {
            ds,
            propensity: None,
            outcome: None,
            logistic: LogisticOptions::default(),
            ow_form: OwVarianceForm::default(),
        }
    }

    pub fn dataset(&self) -> &TrialDataset {
        self.ds
    }

    pub fn propensity(&mut self) -> Result<&PropensityFit> {
        if self.propensity.is_none() {
            self.propensity = Some(fit_propensity(self.ds, &self.logistic).map_err(|e| e.to_string()));
        }
        match self.propensity.as_ref().unwrap() {
            Ok(f) => Ok(f),
            // refit to surface the typed error; the fit is deterministic
            Err(msg) => Err(fit_propensity(self.ds, &self.logistic)
                .err()
                .unwrap_or_else(|| Error::InvalidArgument(msg.clone()))),
        }
    }

    fn fit_outcome(&self) -> Result<OutcomeModel> {
        match self.ds.outcome_kind() {
            OutcomeKind::Continuous => fit_ancova(self.ds, true).map(|f| f.outcome_model(self.ds)),
            OutcomeKind::Binary => fit_outcome_logistic(self.ds, &self.logistic),
        }
    }

    fn outcome_model(&mut self) -> Result<&OutcomeModel> {
        if self.outcome.is_none() {
            self.outcome = Some(self.fit_outcome().map_err(|e| e.to_string()));
        }
        match self.outcome.as_ref().unwrap() {
            Ok(m) => Ok(m),
            Err(msg) => Err(self
                .fit_outcome()
                .err()
                .unwrap_or_else(|| Error::OutcomeModelNonConvergence(msg.clone()))),
        }
    }

    pub fn estimate(&mut self, method: &Method, estimand: EstimandKind) -> Result<EffectEstimate> {
        check_estimand(self.ds, estimand)?;
        match method {
            Method::Unadjusted => unadjusted_effect(self.ds, estimand),
            Method::Weighting(scheme) => {
                let ds = self.ds;
                let fit = self.propensity()?.clone();
                estimate_weighted_with(ds, scheme, estimand, &fit, self.ow_form)
            }
            Method::OutcomeRegression => estimate_outcome_regression(self.ds, estimand),
            Method::Aipw => {
                let ds = self.ds;
                let fit = self.propensity()?.clone();
                let model = self.outcome_model()?.clone();
                estimate_aipw(ds, &fit, &model, estimand)
            }
        }
    }
}
