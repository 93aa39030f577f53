//! Working logistic propensity model fitted by Newton–Raphson / IRLS.
//!
//! The same solver backs the logistic outcome model used for binary
//! outcomes, through [`fit_logistic_design`].

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::TrialDataset;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, with_intercept, SpdFactor};

/// Fitted probabilities must stay strictly inside `(CLAMP_EPS, 1 - CLAMP_EPS)`.
pub const CLAMP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Max-norm tolerance on the score `Σ xᵢ (yᵢ − pᵢ)`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Separation is declared when a coefficient on the standardized
    /// covariate scale exceeds this in absolute value.
    pub coef_limit: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tol: 1e-8,
            max_iter: 100,
            max_halvings: 10,
            coef_limit: 30.0,
        }
    }
}

/// Result of a logistic regression fit on an arbitrary design.
#[derive(Debug, Clone, Serialize)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub fitted: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub loglik_trace: Vec<f64>,
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn loglik(eta: &DVector<f64>, y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum()
}

/// Column centring/scaling applied internally; column 0 must be the intercept.
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn new(design: &DMatrix<f64>) -> Self {
        let (n, k) = design.shape();
        let mut mean = vec![0.0; k];
        let mut scale = vec![1.0; k];
        for j in 1..k {
            let col = design.column(j);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                mean[j] = m;
                scale[j] = var.sqrt();
            }
        }
        Standardizer { mean, scale }
    }

    fn apply(&self, design: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = design.clone();
        for j in 1..design.ncols() {
            for v in out.column_mut(j).iter_mut() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    fn to_original(&self, beta_std: &DVector<f64>) -> Vec<f64> {
        let k = beta_std.len();
        let mut beta = vec![0.0; k];
        beta[0] = beta_std[0];
        for j in 1..k {
            beta[j] = beta_std[j] / self.scale[j];
            beta[0] -= beta[j] * self.mean[j];
        }
        beta
    }
}

/// Maximum-likelihood logistic regression of binary `y` on `design`
/// (first column must be the intercept).
///
/// Newton steps are taken on internally standardized columns with step
/// halving whenever the log-likelihood would decrease; convergence is judged
/// on the original-scale score.
pub fn fit_logistic_design(
    design: &DMatrix<f64>,
    y: &[f64],
    column_names: &[String],
    opts: &LogisticOptions,
) -> Result<LogisticFit> {
    let (n, k) = design.shape();
    assert_eq!(y.len(), n, "design/outcome length mismatch");
    debug_assert_eq!(column_names.len(), k);
    if n < k {
        return Err(Error::RankDeficientDesign(format!(
            "{k} parameters with only {n} observations"
        )));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::SeparationDetected {
            implicated: vec![column_names[0].clone()],
        });
    }
    let std = Standardizer::new(design);
    let xs = std.apply(design);

    let mut beta = DVector::<f64>::zeros(k);
    let mut eta = &xs * &beta;
    let mut ll = loglik(&eta, y);
    let mut trace = vec![ll];
    let mut score_norm = f64::INFINITY;

    for iter in 0..=opts.max_iter {
        let p: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid = DVector::from_iterator(n, y.iter().zip(&p).map(|(yi, pi)| yi - pi));
        let score_orig = design.tr_mul(&resid);
        score_norm = score_orig.amax();

        let limit_hit = beta
            .iter()
            .skip(1)
            .enumerate()
            .filter(|(_, b)| b.abs() > opts.coef_limit)
            .map(|(j, _)| column_names[j + 1].clone())
            .collect::<Vec<_>>();
        let clamp_hit = p.iter().any(|&pi| pi <= CLAMP_EPS || pi >= 1.0 - CLAMP_EPS);
        if !limit_hit.is_empty() || beta[0].abs() > opts.coef_limit || clamp_hit {
            return Err(Error::SeparationDetected {
                implicated: implicated_columns(&beta, column_names, limit_hit),
            });
        }

        if score_norm <= opts.tol {
            let coef = std.to_original(&beta);
            return Ok(LogisticFit {
                coef,
                fitted: p,
                converged: true,
                iterations: iter,
                final_gradient_norm: score_norm,
                loglik_trace: trace,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let w: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let wi = w[i];
            for a in 0..k {
                let xa = xs[(i, a)] * wi;
                for b in 0..=a {
                    xtwx[(a, b)] += xa * xs[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let grad = xs.tr_mul(&resid);
        let factor = SpdFactor::new(&xtwx)
            .map_err(|j| Error::RankDeficientDesign(format!("column '{}' is collinear", column_names[j])))?;
        let step = factor.solve(&grad);

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand = &beta + &step * t;
            let cand_eta = &xs * &cand;
            let cand_ll = loglik(&cand_eta, y);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = cand;
                eta = cand_eta;
                ll = cand_ll.max(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        trace.push(ll);
        if !accepted {
            break;
        }
    }
    Err(Error::MaxIterationsExceeded {
        max_iter: opts.max_iter,
        score_norm,
    })
}

fn implicated_columns(beta: &DVector<f64>, names: &[String], over_limit: Vec<String>) -> Vec<String> {
    if !over_limit.is_empty() {
        return over_limit;
    }
    // Otherwise report the covariate with the largest standardized coefficient.
    beta.iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(j, _)| vec![names[j].clone()])
        .unwrap_or_else(|| vec![names[0].clone()])
}

/// Fitted working propensity model `e(x; θ) = expit(θ₀ + xᵀθ₁)`.
#[derive(Debug, Clone, Serialize)]
pub struct PropensityFit {
    /// `(θ₀, θ₁ᵀ)`, intercept first.
    pub theta: Vec<f64>,
    pub e_hat: Vec<f64>,
    /// Augmented covariates `(1, Xᵢᵀ)` as an `N × (p+1)` matrix.
    #[serde(skip)]
    pub x_tilde: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub loglik_trace: Vec<f64>,
}

impl PropensityFit {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Fits the main-effects logistic propensity model on all covariates of `ds`.
pub fn fit_logistic(ds: &TrialDataset, tol: f64, max_iter: usize) -> Result<PropensityFit> {
    fit_propensity(
        ds,
        &LogisticOptions {
            tol,
            max_iter,
            ..LogisticOptions::default()
        },
    )
}

pub fn fit_propensity(ds: &TrialDataset, opts: &LogisticOptions) -> Result<PropensityFit> {
    let x_tilde = with_intercept(ds.x());
    let mut names = vec!["(intercept)".to_string()];
    names.extend(ds.covariate_names().iter().cloned());
    let fit = fit_logistic_design(&x_tilde, &ds.z_f64(), &names, opts)?;
    Ok(PropensityFit {
        theta: fit.coef,
        e_hat: fit.fitted,
        x_tilde,
        covariate_names: ds.covariate_names().to_vec(),
        converged: fit.converged,
        iterations: fit.iterations,
        final_gradient_norm: fit.final_gradient_norm,
        loglik_trace: fit.loglik_trace,
    })
}

/// Rows `X̃ᵢ (Zᵢ − êᵢ)`; their column sums are the propensity score equations.
pub fn score_contributions(fit: &PropensityFit, ds: &TrialDataset) -> DMatrix<f64> {
    score_contributions_at(&fit.x_tilde, ds.z(), &fit.e_hat)
}

/// Score rows evaluated at arbitrary propensities.
pub fn score_contributions_at(x_tilde: &DMatrix<f64>, z: &[u8], e: &[f64]) -> DMatrix<f64> {
    let mut out = x_tilde.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= f64::from(z[i]) - e[i];
    }
    out
}

/// Propensities implied by arbitrary coefficients `theta` on `x_tilde`.
pub fn propensities_at(x_tilde: &DMatrix<f64>, theta: &[f64]) -> Vec<f64> {
    let th = DVector::from_column_slice(theta);
    (x_tilde * th).iter().map(|&v| expit(v)).collect()
}

pub fn score_norm(scores: &DMatrix<f64>) -> f64 {
    let sums: Vec<f64> = scores.column_iter().map(|c| c.sum()).collect();
    max_abs(&sums)
}
