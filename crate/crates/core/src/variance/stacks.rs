//! Stacked estimating equations for the weighting, augmented and
//! standardization estimators. Parameters are ordered
//! `(μ₁, μ₀, θ, β)`, where `θ` is the propensity model and `β` the outcome model.

use nalgebra::DMatrix;

use crate::dataset::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimandKind, OutcomeModel};
use crate::propensity::{expit, PropensityFit};
use crate::weighting::WeightingScheme;

use super::{sandwich, EstimatingEquations, SandwichComponents};

fn propensity_at(xt: &DMatrix<f64>, i: usize, theta: &[f64]) -> f64 {
    let eta: f64 = theta.iter().enumerate().map(|(j, t)| xt[(i, j)] * t).sum();
    expit(eta)
}

fn linear_predictor(d: &DMatrix<f64>, i: usize, beta: &[f64]) -> f64 {
    beta.iter().enumerate().map(|(j, b)| d[(i, j)] * b).sum()
}

/// Propensity score rows `X̃ᵢ(Zᵢ − eᵢ)` and their Jacobian block at offset `off`.
fn propensity_rows(
    xt: &DMatrix<f64>,
    i: usize,
    zi: f64,
    ei: f64,
    off: usize,
    psi: &mut [f64],
    jac: Option<&mut DMatrix<f64>>,
) {
    let k = xt.ncols();
    for j in 0..k {
        psi[off + j] = xt[(i, j)] * (zi - ei);
    }
    if let Some(jac) = jac {
        let v = ei * (1.0 - ei);
        for r in 0..k {
            for c in 0..k {
                jac[(off + r, off + c)] = -v * xt[(i, r)] * xt[(i, c)];
            }
        }
    }
}

/// Arm weights `(w₁(e), w₀(e))` and their derivatives in `e`.
fn arm_weights(scheme: &WeightingScheme, e: f64) -> (f64, f64, f64, f64) {
    match scheme {
        WeightingScheme::Ipw => (1.0 / e, 1.0 / (1.0 - e), -1.0 / (e * e), 1.0 / (1.0 - e).powi(2)),
        WeightingScheme::Overlap => (1.0 - e, e, -1.0, 1.0),
        WeightingScheme::Att => (1.0, e / (1.0 - e), 0.0, 1.0 / (1.0 - e).powi(2)),
        WeightingScheme::Matching if e <= 0.5 => (1.0, e / (1.0 - e), 0.0, 1.0 / (1.0 - e).powi(2)),
        WeightingScheme::Matching => ((1.0 - e) / e, 1.0, -1.0 / (e * e), 0.0),
        WeightingScheme::Custom { .. } => {
            let w = |e: f64| {
                let h = scheme.h(e);
                (h / e, h / (1.0 - e))
            };
            let step = 1e-6 * e.min(1.0 - e);
            let (hi1, hi0) = w(e + step);
            let (lo1, lo0) = w(e - step);
            let (w1, w0) = w(e);
            (w1, w0, (hi1 - lo1) / (2.0 * step), (hi0 - lo0) / (2.0 * step))
        }
    }
}

/// Hájek balancing-weights estimator: `Zᵢ w₁(eᵢ)(Yᵢ − μ₁)`,
/// `(1−Zᵢ) w₀(eᵢ)(Yᵢ − μ₀)` and the propensity score.
pub struct BalancingStack<'a> {
    y: &'a [f64],
    z: &'a [u8],
    xt: &'a DMatrix<f64>,
    scheme: WeightingScheme,
    lambda: Vec<f64>,
}

impl<'a> BalancingStack<'a> {
    pub fn new(ds: &'a TrialDataset, fit: &'a PropensityFit, scheme: WeightingScheme, mu1: f64, mu0: f64) -> Self {
        let mut lambda = vec![mu1, mu0];
        lambda.extend_from_slice(&fit.theta);
        BalancingStack {
            y: ds.y(),
            z: ds.z(),
            xt: &fit.x_tilde,
            scheme,
            lambda,
        }
    }

    fn eval(&self, i: usize, lambda: &[f64], psi: &mut [f64], jac: Option<&mut DMatrix<f64>>) {
        let (mu1, mu0) = (lambda[0], lambda[1]);
        let e = propensity_at(self.xt, i, &lambda[2..]);
        let zi = f64::from(self.z[i]);
        let (w1, w0, dw1, dw0) = arm_weights(&self.scheme, e);
        let r1 = zi * (self.y[i] - mu1);
        let r0 = (1.0 - zi) * (self.y[i] - mu0);
        psi[0] = w1 * r1;
        psi[1] = w0 * r0;
        let de = e * (1.0 - e);
        match jac {
            Some(jac) => {
                jac[(0, 0)] = -zi * w1;
                jac[(1, 1)] = -(1.0 - zi) * w0;
                for j in 0..self.xt.ncols() {
                    jac[(0, 2 + j)] = r1 * dw1 * de * self.xt[(i, j)];
                    jac[(1, 2 + j)] = r0 * dw0 * de * self.xt[(i, j)];
                }
                propensity_rows(self.xt, i, zi, e, 2, psi, Some(jac));
            }
            None => propensity_rows(self.xt, i, zi, e, 2, psi, None),
        }
    }
}

impl EstimatingEquations for BalancingStack<'_> {
    fn n_units(&self) -> usize {
        self.y.len()
    }

    fn n_params(&self) -> usize {
        self.lambda.len()
    }

    fn lambda_hat(&self) -> &[f64] {
        &self.lambda
    }

    fn psi(&self, i: usize, lambda: &[f64], psi: &mut [f64]) {
        self.eval(i, lambda, psi, None);
    }

    fn jacobian(&self, i: usize, lambda: &[f64], jac: &mut DMatrix<f64>) {
        let mut psi = vec![0.0; self.lambda.len()];
        self.eval(i, lambda, &mut psi, Some(jac));
    }
}

/// Horvitz–Thompson IPW: `ZᵢYᵢ/eᵢ − μ₁`, `(1−Zᵢ)Yᵢ/(1−eᵢ) − μ₀` and the propensity score.
pub struct HorvitzThompsonStack<'a> {
    y: &'a [f64],
    z: &'a [u8],
    xt: &'a DMatrix<f64>,
    lambda: Vec<f64>,
}

impl<'a> HorvitzThompsonStack<'a> {
    pub fn new(ds: &'a TrialDataset, fit: &'a PropensityFit, mu1: f64, mu0: f64) -> Self {
        let mut lambda = vec![mu1, mu0];
        lambda.extend_from_slice(&fit.theta);
        HorvitzThompsonStack {
            y: ds.y(),
            z: ds.z(),
            xt: &fit.x_tilde,
            lambda,
        }
    }

    fn eval(&self, i: usize, lambda: &[f64], psi: &mut [f64], jac: Option<&mut DMatrix<f64>>) {
        let e = propensity_at(self.xt, i, &lambda[2..]);
        let zi = f64::from(self.z[i]);
        let t1 = zi * self.y[i] / e;
        let t0 = (1.0 - zi) * self.y[i] / (1.0 - e);
        psi[0] = t1 - lambda[0];
        psi[1] = t0 - lambda[1];
        match jac {
            Some(jac) => {
                jac[(0, 0)] = -1.0;
                jac[(1, 1)] = -1.0;
                for j in 0..self.xt.ncols() {
                    jac[(0, 2 + j)] = -t1 * (1.0 - e) * self.xt[(i, j)];
                    jac[(1, 2 + j)] = t0 * e * self.xt[(i, j)];
                }
                propensity_rows(self.xt, i, zi, e, 2, psi, Some(jac));
            }
            None => propensity_rows(self.xt, i, zi, e, 2, psi, None),
        }
    }
}

impl EstimatingEquations for HorvitzThompsonStack<'_> {
    fn n_units(&self) -> usize {
        self.y.len()
    }

    fn n_params(&self) -> usize {
        self.lambda.len()
    }

    fn lambda_hat(&self) -> &[f64] {
        &self.lambda
    }

    fn psi(&self, i: usize, lambda: &[f64], psi: &mut [f64]) {
        self.eval(i, lambda, psi, None);
    }

    fn jacobian(&self, i: usize, lambda: &[f64], jac: &mut DMatrix<f64>) {
        let mut psi = vec![0.0; self.lambda.len()];
        self.eval(i, lambda, &mut psi, Some(jac));
    }
}

/// Outcome-model rows `Dᵢ(Yᵢ − g(Dᵢβ))` written at offset `off`.
fn outcome_rows(
    model: &OutcomeModel,
    y: f64,
    i: usize,
    beta: &[f64],
    off: usize,
    psi: &mut [f64],
    jac: Option<&mut DMatrix<f64>>,
) {
    let d = &model.design;
    let eta = linear_predictor(d, i, beta);
    let resid = y - model.link.mean(eta);
    let q = beta.len();
    for j in 0..q {
        psi[off + j] = d[(i, j)] * resid;
    }
    if let Some(jac) = jac {
        let gp = model.link.derivative(eta);
        for r in 0..q {
            for c in 0..q {
                jac[(off + r, off + c)] = -gp * d[(i, r)] * d[(i, c)];
            }
        }
    }
}

/// Augmented IPW with an optional outcome model. Without one, the
/// augmentation is zero and the stack reduces to Horvitz–Thompson IPW.
pub struct AipwStack<'a> {
    y: &'a [f64],
    z: &'a [u8],
    xt: &'a DMatrix<f64>,
    outcome: Option<&'a OutcomeModel>,
    lambda: Vec<f64>,
}

impl<'a> AipwStack<'a> {
    pub fn new(
        ds: &'a TrialDataset,
        fit: &'a PropensityFit,
        outcome: Option<&'a OutcomeModel>,
        mu1: f64,
        mu0: f64,
    ) -> Self {
        let mut lambda = vec![mu1, mu0];
        lambda.extend_from_slice(&fit.theta);
        if let Some(m) = outcome {
            lambda.extend_from_slice(&m.coef);
        }
        AipwStack {
            y: ds.y(),
            z: ds.z(),
            xt: &fit.x_tilde,
            outcome,
            lambda,
        }
    }

    fn eval(&self, i: usize, lambda: &[f64], psi: &mut [f64], mut jac: Option<&mut DMatrix<f64>>) {
        let k = self.xt.ncols();
        let boff = 2 + k;
        let e = propensity_at(self.xt, i, &lambda[2..boff]);
        let zi = f64::from(self.z[i]);
        let yi = self.y[i];
        let (m1, m0, gp1, gp0) = match self.outcome {
            Some(model) => {
                let beta = &lambda[boff..];
                let eta1 = linear_predictor(&model.design_treated, i, beta);
                let eta0 = linear_predictor(&model.design_control, i, beta);
                (
                    model.link.mean(eta1),
                    model.link.mean(eta0),
                    model.link.derivative(eta1),
                    model.link.derivative(eta0),
                )
            }
            None => (0.0, 0.0, 0.0, 0.0),
        };
        let t1 = zi * (yi - m1) / e;
        let t0 = (1.0 - zi) * (yi - m0) / (1.0 - e);
        psi[0] = t1 + m1 - lambda[0];
        psi[1] = t0 + m0 - lambda[1];
        if let Some(jac) = jac.as_deref_mut() {
            jac[(0, 0)] = -1.0;
            jac[(1, 1)] = -1.0;
            for j in 0..k {
                jac[(0, 2 + j)] = -t1 * (1.0 - e) * self.xt[(i, j)];
                jac[(1, 2 + j)] = t0 * e * self.xt[(i, j)];
            }
            if let Some(model) = self.outcome {
                let f1 = -(zi - e) / e * gp1;
                let f0 = (zi - e) / (1.0 - e) * gp0;
                for j in 0..model.dim() {
                    jac[(0, boff + j)] = f1 * model.design_treated[(i, j)];
                    jac[(1, boff + j)] = f0 * model.design_control[(i, j)];
                }
            }
        }
        propensity_rows(self.xt, i, zi, e, 2, psi, jac.as_deref_mut());
        if let Some(model) = self.outcome {
            outcome_rows(model, yi, i, &lambda[boff..], boff, psi, jac);
        }
    }
}

impl EstimatingEquations for AipwStack<'_> {
    fn n_units(&self) -> usize {
        self.y.len()
    }

    fn n_params(&self) -> usize {
        self.lambda.len()
    }

    fn lambda_hat(&self) -> &[f64] {
        &self.lambda
    }

    fn psi(&self, i: usize, lambda: &[f64], psi: &mut [f64]) {
        self.eval(i, lambda, psi, None);
    }

    fn jacobian(&self, i: usize, lambda: &[f64], jac: &mut DMatrix<f64>) {
        let mut psi = vec![0.0; self.lambda.len()];
        self.eval(i, lambda, &mut psi, Some(jac));
    }
}

/// Outcome regression with standardization: `g(Dᵢ(1)β) − μ₁`,
/// `g(Dᵢ(0)β) − μ₀` and the outcome-model score.
pub struct StandardizationStack<'a> {
    y: &'a [f64],
    model: &'a OutcomeModel,
    lambda: Vec<f64>,
}

impl<'a> StandardizationStack<'a> {
    pub fn new(ds: &'a TrialDataset, model: &'a OutcomeModel, mu1: f64, mu0: f64) -> Self {
        let mut lambda = vec![mu1, mu0];
        lambda.extend_from_slice(&model.coef);
        StandardizationStack {
            y: ds.y(),
            model,
            lambda,
        }
    }

    fn eval(&self, i: usize, lambda: &[f64], psi: &mut [f64], mut jac: Option<&mut DMatrix<f64>>) {
        let m = self.model;
        let beta = &lambda[2..];
        let eta1 = linear_predictor(&m.design_treated, i, beta);
        let eta0 = linear_predictor(&m.design_control, i, beta);
        psi[0] = m.link.mean(eta1) - lambda[0];
        psi[1] = m.link.mean(eta0) - lambda[1];
        if let Some(jac) = jac.as_deref_mut() {
            jac[(0, 0)] = -1.0;
            jac[(1, 1)] = -1.0;
            let (gp1, gp0) = (m.link.derivative(eta1), m.link.derivative(eta0));
            for j in 0..m.dim() {
                jac[(0, 2 + j)] = gp1 * m.design_treated[(i, j)];
                jac[(1, 2 + j)] = gp0 * m.design_control[(i, j)];
            }
        }
        outcome_rows(m, self.y[i], i, beta, 2, psi, jac);
    }
}

impl EstimatingEquations for StandardizationStack<'_> {
    fn n_units(&self) -> usize {
        self.y.len()
    }

    fn n_params(&self) -> usize {
        self.lambda.len()
    }

    fn lambda_hat(&self) -> &[f64] {
        &self.lambda
    }

    fn psi(&self, i: usize, lambda: &[f64], psi: &mut [f64]) {
        self.eval(i, lambda, psi, None);
    }

    fn jacobian(&self, i: usize, lambda: &[f64], jac: &mut DMatrix<f64>) {
        let mut psi = vec![0.0; self.lambda.len()];
        self.eval(i, lambda, &mut psi, Some(jac));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpwForm {
    /// Self-normalized weighted means.
    Hajek,
    /// Inverse-probability-weighted totals over `N`.
    HorvitzThompson,
}

#[derive(Debug, Clone)]
pub enum StackMethod {
    Balancing(WeightingScheme),
    HorvitzThompson,
    Aipw,
    Standardization,
}

/// Empirical sandwich for the chosen stack at `(μ̂₁, μ̂₀)`.
pub fn stacked_sandwich(
    ds: &TrialDataset,
    propensity: Option<&PropensityFit>,
    outcome: Option<&OutcomeModel>,
    method: &StackMethod,
    mu1: f64,
    mu0: f64,
) -> Result<SandwichComponents> {
    let need_ps = || propensity.ok_or_else(|| Error::InvalidArgument("stack requires a propensity fit".into()));
    match method {
        StackMethod::Balancing(s) => sandwich(&BalancingStack::new(ds, need_ps()?, s.clone(), mu1, mu0)),
        StackMethod::HorvitzThompson => sandwich(&HorvitzThompsonStack::new(ds, need_ps()?, mu1, mu0)),
        StackMethod::Aipw => sandwich(&AipwStack::new(ds, need_ps()?, outcome, mu1, mu0)),
        StackMethod::Standardization => {
            let m = outcome.ok_or_else(|| Error::InvalidArgument("stack requires an outcome model".into()))?;
            sandwich(&StandardizationStack::new(ds, m, mu1, mu0))
        }
    }
}

pub fn balancing_stacked_variance(
    ds: &TrialDataset,
    fit: &PropensityFit,
    scheme: &WeightingScheme,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<f64> {
    sandwich(&BalancingStack::new(ds, fit, scheme.clone(), mu1, mu0))?.estimand_variance(estimand)
}

pub fn ipw_variance(
    ds: &TrialDataset,
    fit: &PropensityFit,
    form: IpwForm,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<f64> {
    match form {
        IpwForm::Hajek => balancing_stacked_variance(ds, fit, &WeightingScheme::Ipw, mu1, mu0, estimand),
        IpwForm::HorvitzThompson => {
            sandwich(&HorvitzThompsonStack::new(ds, fit, mu1, mu0))?.estimand_variance(estimand)
        }
    }
}

pub fn aipw_variance(
    ds: &TrialDataset,
    fit: &PropensityFit,
    outcome: Option<&OutcomeModel>,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<f64> {
    sandwich(&AipwStack::new(ds, fit, outcome, mu1, mu0))?.estimand_variance(estimand)
}

pub fn standardization_variance(
    ds: &TrialDataset,
    model: &OutcomeModel,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<f64> {
    sandwich(&StandardizationStack::new(ds, model, mu1, mu0))?.estimand_variance(estimand)
}
