use crate::error::{Error, Result};
use crate::estimators::AncovaFit;

/// HC0 (Huber–White) variance of the ANCOVA treatment coefficient.
pub fn huber_white_ancova(fit: &AncovaFit) -> Result<f64> {
    let u = fit.xtx_inv.row(1);
    let mut var = 0.0;
    for (i, r) in fit.residuals.iter().enumerate() {
        let lev = u.dot(&fit.design.row(i));
        var += lev * lev * r * r;
    }
    if !var.is_finite() {
        return Err(Error::SingularMatrix("ANCOVA cross-product".into()));
    }
    Ok(var)
}
