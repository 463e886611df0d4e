use serde::Serialize;

use crate::error::{NrbaError, Result};
use crate::stats::critical_value;

/// Combined multiple-imputation estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledEstimate {
    pub m: usize,
    pub estimate: f64,
    /// Mean within-imputation variance.
    pub within: f64,
    /// Between-imputation variance.
    pub between: f64,
    /// `within + (1 + 1/m) between`.
    pub total: f64,
    /// Infinite when `between` is zero.
    pub df: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Combine `m` point estimates and their within-imputation variances.
pub fn pool(estimates: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(NrbaError::Config(format!("pooling needs at least 2 imputations, got {m}")));
    }
    if variances.len() != m {
        return Err(NrbaError::Data("estimates and variances differ in length".into()));
    }
    if estimates.iter().chain(variances).any(|v| !v.is_finite()) || variances.iter().any(|&v| v < 0.0) {
        return Err(NrbaError::Data("pooling inputs must be finite, variances non-negative".into()));
    }
    let mf = m as f64;
    let qbar = estimates.iter().sum::<f64>() / mf;
    let within = variances.iter().sum::<f64>() / mf;
    let between = estimates.iter().map(|q| (q - qbar).powi(2)).sum::<f64>() / (mf - 1.0);
    let inflated = (1.0 + 1.0 / mf) * between;
    let total = within + inflated;
    let df = if inflated > 0.0 { (mf - 1.0) * (1.0 + within / inflated).powi(2) } else { f64::INFINITY };
    let se = total.sqrt();
    let crit = critical_value(0.05, df);
    Ok(PooledEstimate { m, estimate: qbar, within, between, total, df, se, lower: qbar - crit * se, upper: qbar + crit * se })
}
