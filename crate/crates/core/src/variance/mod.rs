//! Sandwich variances, delta-method transforms and Wald intervals.

mod ow;
mod robust;
mod stacks;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimators::EstimandKind;
use crate::linalg::{invert_general, CONDITION_WARN};

pub use ow::{ow_sandwich_variance, ow_sandwich_variance_with, ow_variance_parts, OwVarianceForm, OwVarianceParts};
pub use robust::huber_white_ancova;
pub use stacks::{
    aipw_variance, balancing_stacked_variance, ipw_variance, stacked_sandwich, standardization_variance, AipwStack,
    BalancingStack, HorvitzThompsonStack, IpwForm, StackMethod, StandardizationStack,
};

/// Per-unit estimating functions `Uᵢ(λ)` of an M-estimator whose first two
/// parameters are the arm means `(μ₁, μ₀)`.
pub trait EstimatingEquations {
    fn n_units(&self) -> usize;

    fn n_params(&self) -> usize;

    /// The solution `λ̂` of `Σᵢ Uᵢ(λ) = 0`.
    fn lambda_hat(&self) -> &[f64];

    /// Writes `Uᵢ(λ)` into `psi`.
    fn psi(&self, i: usize, lambda: &[f64], psi: &mut [f64]);

    /// Writes `∂Uᵢ/∂λᵀ` into `jac` (row = equation, column = parameter).
    /// `jac` is zeroed by the caller.
    fn jacobian(&self, i: usize, lambda: &[f64], jac: &mut DMatrix<f64>);
}

/// Empirical sandwich pieces `A = −N⁻¹ΣᵢJᵢ`, `B = N⁻¹ΣᵢUᵢUᵢᵀ`.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichComponents {
    pub n: usize,
    #[serde(skip)]
    pub a: DMatrix<f64>,
    #[serde(skip)]
    pub b: DMatrix<f64>,
    pub lambda_hat: Vec<f64>,
    /// `A⁻¹BA⁻ᵀ`, the asymptotic covariance of `√N(λ̂ − λ)`.
    #[serde(skip)]
    pub asymptotic_cov: DMatrix<f64>,
    /// Leading 2×2 block of `asymptotic_cov`.
    #[serde(skip)]
    pub sigma: Matrix2<f64>,
    pub condition_number: f64,
    pub ill_conditioned: bool,
}

impl SandwichComponents {
    /// Finite-sample variance of the estimand, `gᵀΣg / N`.
    pub fn estimand_variance(&self, estimand: EstimandKind) -> Result<f64> {
        let mu1 = self.lambda_hat[0];
        let mu0 = self.lambda_hat[1];
        Ok(delta_ratio(mu1, mu0, &self.sigma, estimand)? / self.n as f64)
    }
}

/// Assembles the empirical sandwich for a stack of estimating equations.
pub fn sandwich(eq: &dyn EstimatingEquations) -> Result<SandwichComponents> {
    let n = eq.n_units();
    let k = eq.n_params();
    let lambda = eq.lambda_hat();
    let mut a = DMatrix::<f64>::zeros(k, k);
    let mut b = DMatrix::<f64>::zeros(k, k);
    let mut psi = vec![0.0; k];
    let mut jac = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        eq.psi(i, lambda, &mut psi);
        jac.fill(0.0);
        eq.jacobian(i, lambda, &mut jac);
        a -= &jac;
        let u = DVector::from_column_slice(&psi);
        b.ger(1.0, &u, &u, 1.0);
    }
    let nf = n as f64;
    a /= nf;
    b /= nf;
    let (a_inv, cond) = invert_general(&a, "sandwich bread matrix")?;
    let cov = &a_inv * &b * a_inv.transpose();
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix("sandwich covariance".into()));
    }
    let sigma = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
    Ok(SandwichComponents {
        n,
        a,
        b,
        lambda_hat: lambda.to_vec(),
        asymptotic_cov: cov,
        sigma,
        condition_number: cond,
        ill_conditioned: cond > CONDITION_WARN,
    })
}

/// Gradient of the estimand with respect to `(μ₁, μ₀)`.
pub fn delta_gradient(mu1: f64, mu0: f64, estimand: EstimandKind) -> Result<Vector2<f64>> {
    match estimand {
        EstimandKind::Rd => Ok(Vector2::new(1.0, -1.0)),
        _ if !(mu1 > 0.0 && mu1 < 1.0 && mu0 > 0.0 && mu0 < 1.0) => Err(Error::BoundaryMean { mu1, mu0 }),
        EstimandKind::LogRr => Ok(Vector2::new(1.0 / mu1, -1.0 / mu0)),
        EstimandKind::LogOr => Ok(Vector2::new(1.0 / (mu1 * (1.0 - mu1)), -1.0 / (mu0 * (1.0 - mu0)))),
    }
}

/// `gᵀ Σ g` for the estimand gradient `g` at `(μ₁, μ₀)`.
pub fn delta_ratio(mu1: f64, mu0: f64, sigma: &Matrix2<f64>, estimand: EstimandKind) -> Result<f64> {
    let g = delta_gradient(mu1, mu0, estimand)?;
    Ok((g.transpose() * sigma * g)[(0, 0)])
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Two-sided normal critical value for a `level` interval.
pub fn normal_critical_value(level: f64) -> f64 {
    std_normal().inverse_cdf(0.5 + level / 2.0)
}

/// Wald interval `point ± z·sqrt(variance)`.
pub fn confidence_interval(point: f64, variance: f64, level: f64) -> (f64, f64) {
    let half = normal_critical_value(level) * variance.max(0.0).sqrt();
    (point - half, point + half)
}

/// Two-sided p-value of the Wald test of a zero effect.
pub fn two_sided_p_value(point: f64, variance: f64) -> f64 {
    let se = variance.max(0.0).sqrt();
    if se == 0.0 {
        return if point == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * std_normal().cdf(-(point / se).abs())
}
