//! Two-moment `β χ²_d` approximation of the null law of `S_n`.

use super::gamma::regularized_gamma_q;
use super::theta::ThetaMatrix;
use crate::error::{Error, Result};

/// `(β, d)` with `β = tr(Θ²)/tr(Θ)` and `d = tr(Θ)²/tr(Θ²)`.
pub fn welch_satterthwaite(theta: &ThetaMatrix) -> Result<(f64, f64)> {
    let tr = theta.trace();
    let tr2 = theta.trace_sq();
    if !(tr > 0.0 && tr2 > 0.0) || !tr.is_finite() || !tr2.is_finite() {
        return Err(Error::DegenerateTheta(tr));
    }
    Ok((tr2 / tr, tr * tr / tr2))
}

/// Upper tail `P(β χ²_d > S_n) = Q(d/2, S_n/(2β))`.
pub fn chi2_mixture_pvalue(sn: f64, beta: f64, d: f64) -> Result<f64> {
    if !(beta > 0.0) || !(d > 0.0) {
        return Err(Error::InvalidInput(format!(
            "β and d must be positive, got β = {beta}, d = {d}"
        )));
    }
    if sn.is_nan() {
        return Err(Error::InvalidInput("S_n is NaN".into()));
    }
    let p = regularized_gamma_q(d / 2.0, sn.max(0.0) / (2.0 * beta))?;
    Ok(p.clamp(0.0, 1.0))
}
