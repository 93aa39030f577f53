//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! The systems solved here are tiny (at most a few dozen unknowns), so the
//! helpers favour explicit pivot checks over speed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which a symmetric system is declared rank deficient.
pub const PIVOT_RTOL: f64 = 1e-10;

/// Condition number above which a sandwich bread matrix is flagged.
pub const CONDITION_WARN: f64 = 1e12;

/// Cholesky factor `L` of a symmetric positive-definite matrix, `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
}

impl SpdFactor {
    /// Factorizes `m`, failing when a pivot falls below `PIVOT_RTOL` times the
    /// largest pivot seen. Returns the offending column index in the error.
    pub fn new(m: &DMatrix<f64>) -> std::result::Result<Self, usize> {
        let n = m.nrows();
        debug_assert_eq!(n, m.ncols());
        let mut l = DMatrix::<f64>::zeros(n, n);
        let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0_f64, f64::max);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > PIVOT_RTOL * max_diag) || !d.is_finite() {
                return Err(j);
            }
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(SpdFactor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::<f64>::zeros(n);
            e[j] = 1.0;
            inv.set_column(j, &self.solve(&e));
        }
        // symmetrize rounding
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }
}

/// Inverts a general square matrix by LU with partial pivoting, returning the
/// inverse and an estimate of the 2-norm condition number.
pub fn invert_general(a: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || !smax.is_finite() {
        return Err(Error::SingularMatrix(what.to_string()));
    }
    let cond = smax / smin;
    let inv = a
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix(what.to_string()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix(what.to_string()));
    }
    Ok((inv, cond))
}

/// Least-squares solution of `design * beta ≈ y` via Householder QR.
///
/// Returns `beta` and `(XᵀX)⁻¹`. Rank deficiency is declared when a diagonal
/// entry of `R` falls below `sqrt(PIVOT_RTOL)` times the largest one, which
/// matches the `PIVOT_RTOL` rule applied to `XᵀX = RᵀR`.
pub fn least_squares(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
) -> std::result::Result<(DVector<f64>, DMatrix<f64>), usize> {
    let (n, k) = design.shape();
    if n < k {
        return Err(k.saturating_sub(1).min(n));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let max_r = (0..k).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    for j in 0..k {
        let rjj = r[(j, j)].abs();
        if !(rjj > PIVOT_RTOL.sqrt() * max_r) {
            return Err(j);
        }
    }
    let qty = qr.q().transpose() * y;
    let mut beta = DVector::<f64>::zeros(k);
    for i in (0..k).rev() {
        let mut s = qty[i];
        for j in (i + 1)..k {
            s -= r[(i, j)] * beta[j];
        }
        beta[i] = s / r[(i, i)];
    }
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ
    let mut rinv = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        rinv[(j, j)] = 1.0 / r[(j, j)];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for m in (i + 1)..=j {
                s += r[(i, m)] * rinv[(m, j)];
            }
            rinv[(i, j)] = -s / r[(i, i)];
        }
    }
    let xtx_inv = &rinv * rinv.transpose();
    Ok((beta, xtx_inv))
}

/// Prepends a column of ones to `x`.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut out = DMatrix::<f64>::from_element(n, p + 1, 1.0);
    out.view_mut((0, 1), (n, p)).copy_from(x);
    out
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
