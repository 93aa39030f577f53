//! Closed-form sandwich variances of the overlap-weighted estimator.
//!
//! Two forms are provided. [`OwVarianceForm::Display`] replaces sample
//! averages over arms by arm-size-normalized sums and the meat `Ω` by `S`:
//!
//! ```text
//! q   = N⁻¹ Σ êᵢ(1−êᵢ)
//! V̂   = q⁻² [Ê₁²/N₁ Σ Zᵢêᵢ(1−êᵢ)²Rᵢ₁² + Ê₀²/N₀ Σ (1−Zᵢ)êᵢ²(1−êᵢ)Rᵢ₀²]
//! v̂₁  = q⁻¹ [Ê₁/N₁ Σ Zᵢêᵢ²(1−êᵢ)Rᵢ₁X̃ᵢ + Ê₀/N₀ Σ (1−Zᵢ)êᵢ(1−êᵢ)²Rᵢ₀X̃ᵢ]
//! v̂₂  = q⁻¹ [Ê₁/N₁ Σ Zᵢêᵢ(1−êᵢ)²Rᵢ₁X̃ᵢ + Ê₀/N₀ Σ (1−Zᵢ)êᵢ²(1−êᵢ)Rᵢ₀X̃ᵢ]
//! N·Var = V̂ − v̂₁ᵀS⁻¹(2v̂₂ − v̂₁)
//! ```
//!
//! [`OwVarianceForm::Empirical`] is the plug-in `A⁻¹BA⁻ᵀ` extraction. With `Rᵢ₁ = Yᵢ − μ̂₁`, `Rᵢ₀ = Yᵢ − μ̂₀`, `aₖ` the arm weight totals over
//! `N` and `g` the estimand gradient, the influence terms are
//!
//! ```text
//! Dᵢ  = g₁/a₁ · Zᵢ(1−êᵢ)Rᵢ₁ + g₀/a₀ · (1−Zᵢ)êᵢRᵢ₀
//! v₁  = N⁻¹ Σ êᵢ(1−êᵢ) X̃ᵢ [g₁/a₁ · ZᵢRᵢ₁ − g₀/a₀ · (1−Zᵢ)Rᵢ₀]
//! v₂  = N⁻¹ Σ (Zᵢ−êᵢ) X̃ᵢ Dᵢ
//! S   = N⁻¹ Σ êᵢ(1−êᵢ) X̃ᵢX̃ᵢᵀ,   Ω = N⁻¹ Σ (Zᵢ−êᵢ)² X̃ᵢX̃ᵢᵀ
//! N·Var = N⁻¹ΣDᵢ² − 2 v₁ᵀS⁻¹v₂ + v₁ᵀS⁻¹ΩS⁻¹v₁
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::TrialDataset;
use crate::error::{Error, Result};
use crate::estimators::EstimandKind;
use crate::linalg::SpdFactor;
use crate::propensity::PropensityFit;

use super::delta_gradient;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OwVarianceForm {
    /// Arm-normalized form; slightly conservative in small samples.
    #[default]
    Display,
    /// Exact empirical sandwich; agrees with the stacked estimating equations.
    Empirical,
}

impl std::str::FromStr for OwVarianceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "display" => Ok(OwVarianceForm::Display),
            "empirical" | "exact" => Ok(OwVarianceForm::Empirical),
            _ => Err(Error::InvalidArgument(format!("unknown OW variance form '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OwVarianceParts {
    pub form: OwVarianceForm,
    pub n: usize,
    /// The part ignoring propensity estimation.
    pub v_hat: f64,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    #[serde(skip)]
    pub s_matrix: DMatrix<f64>,
    #[serde(skip)]
    pub omega: DMatrix<f64>,
    pub a1: f64,
    pub a0: f64,
    /// `Ê₁` and `Ê₀`: 1 (RD), `1/μ̂ₖ` (logRR), `1/{μ̂ₖ(1−μ̂ₖ)}` (logOR).
    pub e1_hat: f64,
    pub e0_hat: f64,
    /// `−2 v₁ᵀS⁻¹v₂ + v₁ᵀS⁻¹ΩS⁻¹v₁`; `Ω = S` in the display form.
    pub propensity_correction: f64,
}

impl OwVarianceParts {
    pub fn variance(&self) -> f64 {
        (self.v_hat + self.propensity_correction) / self.n as f64
    }
}

pub fn ow_variance_parts(
    ds: &TrialDataset,
    fit: &PropensityFit,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
    form: OwVarianceForm,
) -> Result<OwVarianceParts> {
    match form {
        OwVarianceForm::Display => display_parts(ds, fit, mu1, mu0, estimand),
        OwVarianceForm::Empirical => empirical_parts(ds, fit, mu1, mu0, estimand),
    }
}

fn display_parts(
    ds: &TrialDataset,
    fit: &PropensityFit,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<OwVarianceParts> {
    let g = delta_gradient(mu1, mu0, estimand)?;
    let (e1, e0) = (g[0], -g[1]);
    let n = ds.n();
    let nf = n as f64;
    let xt = &fit.x_tilde;
    let k = xt.ncols();
    let e = &fit.e_hat;
    let (y, z) = (ds.y(), ds.z());
    let n1 = ds.n_treated() as f64;
    let n0 = ds.n_control() as f64;

    let q = e.iter().map(|v| v * (1.0 - v)).sum::<f64>() / nf;
    if !(q > 0.0) {
        return Err(Error::DegenerateWeights("overlap weight total is zero".into()));
    }
    let (mut a1, mut a0) = (0.0, 0.0);
    let mut v_hat = 0.0;
    let mut v1 = DVector::<f64>::zeros(k);
    let mut v2 = DVector::<f64>::zeros(k);
    let mut s = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let ei = e[i];
        let ve = ei * (1.0 - ei);
        let xi = xt.row(i).transpose();
        s.ger(ve / nf, &xi, &xi, 1.0);
        if z[i] == 1 {
            let r = y[i] - mu1;
            a1 += 1.0 - ei;
            v_hat += e1 * e1 * ve * (1.0 - ei) * r * r / n1;
            v1.axpy(e1 * ve * ei * r / n1, &xi, 1.0);
            v2.axpy(e1 * ve * (1.0 - ei) * r / n1, &xi, 1.0);
        } else {
            let r = y[i] - mu0;
            a0 += ei;
            v_hat += e0 * e0 * ve * ei * r * r / n0;
            v1.axpy(e0 * ve * (1.0 - ei) * r / n0, &xi, 1.0);
            v2.axpy(e0 * ve * ei * r / n0, &xi, 1.0);
        }
    }
    v_hat /= q * q;
    v1 /= q;
    v2 /= q;

    let chol = SpdFactor::new(&s).map_err(|_| Error::SingularMatrix("meat matrix".into()))?;
    let s_inv_v1 = chol.solve(&v1);
    let correction = -s_inv_v1.dot(&(2.0 * &v2 - &v1));

    Ok(OwVarianceParts {
        form: OwVarianceForm::Display,
        n,
        v_hat,
        v1: v1.iter().copied().collect(),
        v2: v2.iter().copied().collect(),
        omega: s.clone(),
        s_matrix: s,
        a1: a1 / nf,
        a0: a0 / nf,
        e1_hat: e1,
        e0_hat: e0,
        propensity_correction: correction,
    })
}

fn empirical_parts(
    ds: &TrialDataset,
    fit: &PropensityFit,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<OwVarianceParts> {
    let g = delta_gradient(mu1, mu0, estimand)?;
    let (g1, g0) = (g[0], g[1]);
    let n = ds.n();
    let nf = n as f64;
    let xt = &fit.x_tilde;
    let k = xt.ncols();
    let e = &fit.e_hat;
    let (y, z) = (ds.y(), ds.z());

    let (mut a1, mut a0) = (0.0, 0.0);
    for i in 0..n {
        if z[i] == 1 {
            a1 += 1.0 - e[i];
        } else {
            a0 += e[i];
        }
    }
    a1 /= nf;
    a0 /= nf;
    if !(a1 > 0.0 && a0 > 0.0) {
        return Err(Error::DegenerateWeights("overlap weight total is zero".into()));
    }
    let (c1, c0) = (g1 / a1, g0 / a0);

    let mut v_hat = 0.0;
    let mut v1 = DVector::<f64>::zeros(k);
    let mut v2 = DVector::<f64>::zeros(k);
    let mut s = DMatrix::<f64>::zeros(k, k);
    let mut omega = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        let ei = e[i];
        let xi = xt.row(i).transpose();
        let (d, h) = if z[i] == 1 {
            let r = y[i] - mu1;
            (c1 * (1.0 - ei) * r, c1 * r)
        } else {
            let r = y[i] - mu0;
            (c0 * ei * r, -c0 * r)
        };
        let zi = f64::from(z[i]);
        let ve = ei * (1.0 - ei);
        v_hat += d * d;
        v1.axpy(ve * h, &xi, 1.0);
        v2.axpy((zi - ei) * d, &xi, 1.0);
        s.ger(ve, &xi, &xi, 1.0);
        omega.ger((zi - ei).powi(2), &xi, &xi, 1.0);
    }
    v_hat /= nf;
    v1 /= nf;
    v2 /= nf;
    s /= nf;
    omega /= nf;

    let chol = SpdFactor::new(&s).map_err(|_| Error::SingularMatrix("meat matrix".into()))?;
    let s_inv_v1 = chol.solve(&v1);
    let correction = -2.0 * s_inv_v1.dot(&v2) + (&omega * &s_inv_v1).dot(&s_inv_v1);

    Ok(OwVarianceParts {
        form: OwVarianceForm::Empirical,
        n,
        v_hat,
        v1: v1.iter().copied().collect(),
        v2: v2.iter().copied().collect(),
        s_matrix: s,
        omega,
        a1,
        a0,
        e1_hat: g1,
        e0_hat: -g0,
        propensity_correction: correction,
    })
}

/// Closed-form OW variance of the estimand in the default form.
pub fn ow_sandwich_variance(
    ds: &TrialDataset,
    fit: &PropensityFit,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
) -> Result<f64> {
    ow_sandwich_variance_with(ds, fit, mu1, mu0, estimand, OwVarianceForm::default())
}

pub fn ow_sandwich_variance_with(
    ds: &TrialDataset,
    fit: &PropensityFit,
    mu1: f64,
    mu0: f64,
    estimand: EstimandKind,
    form: OwVarianceForm,
) -> Result<f64> {
    Ok(ow_variance_parts(ds, fit, mu1, mu0, estimand, form)?.variance())
}
