//! Balancing-weights family, Hájek weighted means and covariate balance.
//!
//! A scheme is identified by its tilting function `h(e)`; unit weights are
//! `h(e)/e` for treated units and `h(e)/(1−e)` for controls.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::dataset::TrialDataset;
use crate::error::{Error, Result};
use crate::propensity::PropensityFit;

/// A member of the balancing-weights family.
#[derive(Clone)]
pub enum WeightingScheme {
    /// `h(e) = 1`
    Ipw,
    /// `h(e) = e(1 − e)`
    Overlap,
    /// `h(e) = e`
    Att,
    /// `h(e) = min(e, 1 − e)`
    Matching,
    /// User tilting function; must be finite and non-negative on (0, 1).
    Custom {
        label: String,
        tilt: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl WeightingScheme {
    pub fn custom(label: &str, tilt: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        WeightingScheme::Custom {
            label: label.to_string(),
            tilt: Arc::new(tilt),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            WeightingScheme::Ipw => "IPW",
            WeightingScheme::Overlap => "OW",
            WeightingScheme::Att => "ATT",
            WeightingScheme::Matching => "MW",
            WeightingScheme::Custom { label, .. } => label,
        }
    }

    pub(crate) fn h(&self, e: f64) -> f64 {
        match self {
            WeightingScheme::Ipw => 1.0,
            WeightingScheme::Overlap => e * (1.0 - e),
            WeightingScheme::Att => e,
            WeightingScheme::Matching => e.min(1.0 - e),
            WeightingScheme::Custom { tilt, .. } => tilt(e),
        }
    }
}

impl fmt::Debug for WeightingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for WeightingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipw" => Ok(WeightingScheme::Ipw),
            "ow" | "overlap" => Ok(WeightingScheme::Overlap),
            "att" => Ok(WeightingScheme::Att),
            "mw" | "matching" => Ok(WeightingScheme::Matching),
            other => Err(Error::InvalidArgument(format!("unknown weighting scheme '{other}'"))),
        }
    }
}

fn check_propensities(e: &[f64]) -> Result<()> {
    match e.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        None => Ok(()),
        Some(i) => Err(Error::InvalidArgument(format!(
            "propensity {} at position {} outside (0, 1)",
            e[i], i
        ))),
    }
}

/// Elementwise tilting function `h(eᵢ)`.
pub fn tilt(scheme: &WeightingScheme, e: &[f64]) -> Result<Vec<f64>> {
    check_propensities(e)?;
    e.iter()
        .map(|&ei| {
            let h = scheme.h(ei);
            if h.is_finite() && h >= 0.0 {
                Ok(h)
            } else {
                Err(Error::InvalidArgument(format!(
                    "tilting function {} returned {h} at e = {ei}",
                    scheme.label()
                )))
            }
        })
        .collect()
}

/// Balancing weights `h(e)/e` (treated) and `h(e)/(1−e)` (control).
pub fn unit_weights(scheme: &WeightingScheme, e: &[f64], z: &[u8]) -> Result<Vec<f64>> {
    if e.len() != z.len() {
        return Err(Error::InvalidArgument("propensity/treatment length mismatch".into()));
    }
    let h = tilt(scheme, e)?;
    Ok(match scheme {
        // closed forms avoid h/e rounding
        WeightingScheme::Overlap => e
            .iter()
            .zip(z)
            .map(|(&ei, &zi)| if zi == 1 { 1.0 - ei } else { ei })
            .collect(),
        WeightingScheme::Ipw => e
            .iter()
            .zip(z)
            .map(|(&ei, &zi)| if zi == 1 { 1.0 / ei } else { 1.0 / (1.0 - ei) })
            .collect(),
        _ => h
            .iter()
            .zip(e.iter().zip(z))
            .map(|(&hi, (&ei, &zi))| if zi == 1 { hi / ei } else { hi / (1.0 - ei) })
            .collect(),
    })
}

/// Hájek (self-normalized) weighted arm means `(μ̂₁, μ̂₀)`.
pub fn hajek_means(y: &[f64], z: &[u8], w: &[f64]) -> Result<(f64, f64)> {
    let (mut s1, mut d1, mut s0, mut d0) = (0.0, 0.0, 0.0, 0.0);
    for ((&yi, &zi), &wi) in y.iter().zip(z).zip(w) {
        if zi == 1 {
            s1 += wi * yi;
            d1 += wi;
        } else {
            s0 += wi * yi;
            d0 += wi;
        }
    }
    if !(d1 > 0.0 && d1.is_finite()) || !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::DegenerateWeights(format!(
            "arm weight totals {d1} (treated), {d0} (control)"
        )));
    }
    Ok((s1 / d1, s0 / d0))
}

/// One covariate row of a balance table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceRow {
    pub name: String,
    pub mean_treated: f64,
    pub mean_control: f64,
    /// Pooled scale `S_j = sqrt{(Var₁ + Var₀)/2}` from unweighted arm variances.
    pub scale: f64,
    pub asd: f64,
    /// Set when `S_j = 0` while the weighted means differ.
    pub degenerate_scale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceTable {
    pub weights_label: String,
    pub rows: Vec<BalanceRow>,
}

impl BalanceTable {
    pub fn max_asd(&self) -> f64 {
        self.rows.iter().map(|r| r.asd).fold(0.0, f64::max)
    }
}

/// Unweighted per-arm sample variance (N−1 denominator) of column `j`.
fn arm_variance(ds: &TrialDataset, j: usize, arm: u8) -> f64 {
    let vals: Vec<f64> = ds
        .z()
        .iter()
        .enumerate()
        .filter(|(_, &z)| z == arm)
        .map(|(i, _)| ds.x()[(i, j)])
        .collect();
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let m = vals.iter().sum::<f64>() / n as f64;
    vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Pooled standard deviation `S_j` used as ASD denominator.
pub fn pooled_scale(ds: &TrialDataset, j: usize) -> f64 {
    (0.5 * (arm_variance(ds, j, 1) + arm_variance(ds, j, 0))).sqrt()
}

/// Absolute standardized differences of every covariate under weights `w`.
pub fn asd(ds: &TrialDataset, w: &[f64], label: &str) -> Result<BalanceTable> {
    let mut rows = Vec::with_capacity(ds.p());
    for (j, name) in ds.covariate_names().iter().enumerate() {
        let col: Vec<f64> = ds.x().column(j).iter().copied().collect();
        let (m1, m0) = hajek_means(&col, ds.z(), w)?;
        let diff = (m1 - m0).abs();
        let scale = pooled_scale(ds, j);
        let (asd, degenerate) = if scale > 0.0 {
            (diff / scale, false)
        } else if diff == 0.0 {
            (0.0, false)
        } else {
            (f64::INFINITY, true)
        };
        rows.push(BalanceRow {
            name: name.clone(),
            mean_treated: m1,
            mean_control: m0,
            scale,
            asd,
            degenerate_scale: degenerate,
        });
    }
    Ok(BalanceTable {
        weights_label: label.to_string(),
        rows,
    })
}

/// Largest absolute OW-weighted mean difference over the covariates that
/// entered the propensity model. Zero up to solver tolerance at the MLE.
pub fn check_exact_balance(ds: &TrialDataset, fit: &PropensityFit) -> Result<f64> {
    let w = unit_weights(&WeightingScheme::Overlap, &fit.e_hat, ds.z())?;
    max_weighted_difference(ds, &w, &fit.covariate_names)
}

/// Largest absolute weighted mean difference over the named covariates.
pub fn max_weighted_difference(ds: &TrialDataset, w: &[f64], names: &[String]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for name in names {
        let j = ds
            .covariate_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        let col: Vec<f64> = ds.x().column(j).iter().copied().collect();
        let (m1, m0) = hajek_means(&col, ds.z(), w)?;
        worst = worst.max((m1 - m0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OutcomeKind;
    use nalgebra::DMatrix;

    #[test]
    fn tilting_functions() {
        assert_eq!(tilt(&WeightingScheme::Overlap, &[0.5]).unwrap(), vec![0.25]);
        assert_eq!(tilt(&WeightingScheme::Ipw, &[0.1, 0.7]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(tilt(&WeightingScheme::Matching, &[0.3]).unwrap(), vec![0.3]);
        assert_eq!(tilt(&WeightingScheme::Att, &[0.3]).unwrap(), vec![0.3]);
        assert!(tilt(&WeightingScheme::Ipw, &[0.0]).is_err());
        assert!(tilt(&WeightingScheme::Ipw, &[1.2]).is_err());
        let bad = WeightingScheme::custom("neg", |e| e - 0.5);
        assert!(tilt(&bad, &[0.2]).is_err());
    }

    #[test]
    fn unit_weight_examples() {
        let ow = unit_weights(&WeightingScheme::Overlap, &[0.3], &[1]).unwrap();
        assert!((ow[0] - 0.7).abs() < 1e-15);
        let ipw = unit_weights(&WeightingScheme::Ipw, &[0.25], &[0]).unwrap();
        assert!((ipw[0] - 4.0 / 3.0).abs() < 1e-15);
        let att = unit_weights(&WeightingScheme::Att, &[0.4], &[0]).unwrap();
        assert!((att[0] - 2.0 / 3.0).abs() < 1e-15);
        // custom route reproduces the OW closed form
        let custom = WeightingScheme::custom("ow-custom", |e| e * (1.0 - e));
        let e = [0.2, 0.45, 0.8];
        let z = [1, 0, 1];
        let a = unit_weights(&custom, &e, &z).unwrap();
        let b = unit_weights(&WeightingScheme::Overlap, &e, &z).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn hajek_examples() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let z = [1, 1, 0, 0];
        let (m1, m0) = hajek_means(&y, &z, &[1.0, 3.0, 1.0, 1.0]).unwrap();
        assert_eq!((m1, m0), (1.75, 3.5));
        let (u1, u0) = hajek_means(&y, &z, &[1.0; 4]).unwrap();
        assert_eq!((u1, u0), (1.5, 3.5));
        let (s1, s0) = hajek_means(&y, &z, &[10.0, 30.0, 10.0, 10.0]).unwrap();
        assert_eq!((s1, s0), (1.75, 3.5));
        assert!(matches!(
            hajek_means(&y, &z, &[0.0, 0.0, 1.0, 1.0]),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn asd_unit_difference() {
        // arm means 1 and 0, both arm variances 1
        let x = [0.0, 1.0, 2.0, -1.0, 0.0, 1.0];
        let z = [1, 1, 1, 0, 0, 0];
        let ds = TrialDataset::new(
            vec![0.0; 6],
            z.to_vec(),
            DMatrix::from_column_slice(6, 1, &x),
            None,
            OutcomeKind::Continuous,
        )
        .unwrap();
        let t = asd(&ds, &[1.0; 6], "UNADJ").unwrap();
        assert!((t.rows[0].asd - 1.0).abs() < 1e-15);
        assert!((t.rows[0].scale - 1.0).abs() < 1e-15);
    }

    #[test]
    fn asd_identical_arms_and_constant_covariate() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 5.0, 2.0, 5.0, 1.0, 5.0, 2.0, 5.0]);
        let ds = TrialDataset::new(vec![0.0; 4], vec![1, 1, 0, 0], x, None, OutcomeKind::Continuous).unwrap();
        let t = asd(&ds, &[1.0; 4], "UNADJ").unwrap();
        assert_eq!(t.rows[0].asd, 0.0);
        assert_eq!(t.rows[1].asd, 0.0);
        assert!(!t.rows[1].degenerate_scale);
        // constant covariate balanced under any weights
        let d = max_weighted_difference(&ds, &[0.3, 2.0, 7.0, 0.1], &["x2".to_string()]).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn asd_flags_degenerate_scale() {
        // each arm constant but different
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 0.0, 0.0]);
        let ds = TrialDataset::new(vec![0.0; 4], vec![1, 1, 0, 0], x, None, OutcomeKind::Continuous).unwrap();
        let t = asd(&ds, &[1.0; 4], "UNADJ").unwrap();
        assert!(t.rows[0].degenerate_scale);
    }
}
