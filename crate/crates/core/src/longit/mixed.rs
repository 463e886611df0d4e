use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NrbaError, Result};
use crate::glm::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMethod {
    #[default]
    Ml,
    Reml,
}

#[derive(Debug, Clone, Default)]
pub struct MixedOptions {
    pub method: VarianceMethod,
    /// Hold the variance ratio `sigma0^2 / sigma^2` fixed instead of
    /// estimating it. `Some(0.0)` gives the independence fit.
    pub fixed_ratio: Option<f64>,
}

/// Random-intercept linear model fit.
#[derive(Debug, Clone)]
pub struct MixedFit {
    pub labels: Vec<String>,
    pub beta: DVector<f64>,
    /// Model-based for unweighted fits, unit-clustered sandwich for
    /// weighted pseudo-likelihood fits.
    pub cov: DMatrix<f64>,
    /// Residual variance.
    pub sigma2: f64,
    /// Random-intercept variance.
    pub sigma0_2: f64,
    pub log_lik: f64,
    /// Variance estimate sits on the `sigma0^2 = 0` boundary.
    pub boundary: bool,
    pub weighted: bool,
    pub method: VarianceMethod,
    /// Best log-likelihood after each profile evaluation.
    pub trace: Vec<f64>,
    pub n_obs: usize,
    pub n_units: usize,
}

impl MixedFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }

    pub fn coef(&self, label: &str) -> Option<(f64, f64)> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some((self.beta[i], self.cov[(i, i)].max(0.0).sqrt()))
    }
}

/// Map arbitrary unit keys to dense group indices in first-seen order.
pub(crate) fn group_index(units: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let idx = units
        .iter()
        .map(|u| {
            let next = map.len();
            *map.entry(*u).or_insert(next)
        })
        .collect();
    (idx, map.len())
}

struct Suff {
    g: DMatrix<f64>,
    xy: DVector<f64>,
    yy: f64,
    s: DMatrix<f64>,
    sy: Vec<f64>,
    wsum: Vec<f64>,
    total: f64,
}

struct Profile {
    ll: f64,
    beta: DVector<f64>,
    a: DMatrix<f64>,
    sigma2: f64,
}

fn profile(suff: &Suff, lambda: f64, method: VarianceMethod, labels: &[String]) -> Result<Profile> {
    let p = suff.g.nrows();
    let c: Vec<f64> = suff.wsum.iter().map(|w| lambda / (1.0 + lambda * w)).collect();
    let mut scaled = suff.s.clone();
    for (i, ci) in c.iter().enumerate() {
        scaled.row_mut(i).scale_mut(ci.sqrt());
    }
    let a = &suff.g - scaled.transpose() * &scaled;
    let a = (&a + a.transpose()) * 0.5;
    let csy = DVector::from_iterator(c.len(), c.iter().zip(&suff.sy).map(|(c, s)| c * s));
    let b = &suff.xy - suff.s.transpose() * &csy;
    let chol = a.clone().cholesky().ok_or_else(|| NrbaError::Singular { columns: labels.to_vec() })?;
    let beta = chol.solve(&b);
    let q = suff.yy - c.iter().zip(&suff.sy).map(|(c, s)| c * s * s).sum::<f64>() - beta.dot(&b);
    let logdet: f64 = suff.wsum.iter().map(|w| (1.0 + lambda * w).ln()).sum();
    let two_pi = 2.0 * std::f64::consts::PI;
    let (ll, sigma2) = match method {
        VarianceMethod::Ml => {
            let s2 = q / suff.total;
            (-0.5 * suff.total * ((two_pi * s2).ln() + 1.0) - 0.5 * logdet, s2)
        }
        VarianceMethod::Reml => {
            let dfree = suff.total - p as f64;
            if dfree <= 0.0 {
                return Err(NrbaError::Data("REML needs more observations than fixed effects".into()));
            }
            let s2 = q / dfree;
            let ld_a: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            (-0.5 * dfree * ((two_pi * s2).ln() + 1.0) - 0.5 * logdet - 0.5 * ld_a, s2)
        }
    };
    if !(sigma2 > 0.0) || !ll.is_finite() {
        return Err(NrbaError::Numerical("non-positive residual variance in mixed model".into()));
    }
    Ok(Profile { ll, beta, a, sigma2 })
}

const LOG_LAMBDA: (f64, f64) = (-14.0, 9.0);
const GRID: usize = 47;
const MAX_REFINE: usize = 200;

/// Fit `y = X beta + b_unit + e` by (pseudo) maximum likelihood, profiling
/// the fixed effects and residual variance out and searching over the
/// variance ratio on the log scale. Row weights enter the likelihood as
/// level-1 frequency weights.
pub fn fit_mixed(
    design: &DesignMatrix,
    y: &[f64],
    units: &[usize],
    weights: Option<&[f64]>,
    opts: &MixedOptions,
) -> Result<MixedFit> {
    let (n, p) = design.x.shape();
    if y.len() != n || units.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(NrbaError::Data("mixed model inputs have inconsistent lengths".into()));
    }
    if let Some(w) = weights {
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(NrbaError::Data("mixed model weights must be positive".into()));
        }
    }
    let (gidx, n_units) = group_index(units);
    let mut sizes = vec![0usize; n_units];
    gidx.iter().for_each(|&g| sizes[g] += 1);
    if sizes.iter().filter(|&&s| s >= 2).count() < 2 {
        return Err(NrbaError::Data("mixed model needs at least 2 units with 2 or more observations".into()));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let x = &design.x;
    let mut xw = x.clone();
    for i in 0..n {
        xw.row_mut(i).scale_mut(w(i));
    }
    let g = xw.transpose() * x;
    let yv = DVector::from_column_slice(y);
    let xy = xw.transpose() * &yv;
    let yy = (0..n).map(|i| w(i) * y[i] * y[i]).sum();
    let mut s = DMatrix::zeros(n_units, p);
    let mut sy = vec![0.0; n_units];
    let mut wsum = vec![0.0; n_units];
    for i in 0..n {
        let k = gidx[i];
        let mut row = s.row_mut(k);
        row += xw.row(i);
        sy[k] += w(i) * y[i];
        wsum[k] += w(i);
    }
    let total = wsum.iter().sum();
    let suff = Suff { g: (&g + g.transpose()) * 0.5, xy, yy, s, sy, wsum, total };
    let labels = &design.labels;

    let mut trace = Vec::new();
    let mut best: Option<(f64, Profile)> = None;
    let eval = |lambda: f64, trace: &mut Vec<f64>, best: &mut Option<(f64, Profile)>| -> Result<f64> {
        let pr = profile(&suff, lambda, opts.method, labels)?;
        let ll = pr.ll;
        if best.as_ref().is_none_or(|(_, b)| ll > b.ll) {
            *best = Some((lambda, pr));
        }
        trace.push(best.as_ref().expect("set").1.ll);
        Ok(ll)
    };

    if let Some(lambda) = opts.fixed_ratio {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(NrbaError::Config("fixed variance ratio must be non-negative".into()));
        }
        eval(lambda, &mut trace, &mut best)?;
    } else {
        let ll0 = eval(0.0, &mut trace, &mut best)?;
        let step = (LOG_LAMBDA.1 - LOG_LAMBDA.0) / (GRID - 1) as f64;
        let thetas: Vec<f64> = (0..GRID).map(|k| LOG_LAMBDA.0 + step * k as f64).collect();
        let mut lls = Vec::with_capacity(GRID);
        for &th in &thetas {
            lls.push(eval(th.exp(), &mut trace, &mut best)?);
        }
        let k = (0..GRID).max_by(|&a, &b| lls[a].total_cmp(&lls[b])).expect("grid");
        let interior = k > 0 && k + 1 < GRID && lls[k] > ll0;
        if interior {
            // golden section on log lambda
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            let (mut lo, mut hi) = (thetas[k - 1], thetas[k + 1]);
            let mut c = hi - phi * (hi - lo);
            let mut d = lo + phi * (hi - lo);
            let mut fc = eval(c.exp(), &mut trace, &mut best)?;
            let mut fd = eval(d.exp(), &mut trace, &mut best)?;
            let mut converged = false;
            for _ in 0..MAX_REFINE {
                let rel = (fc - fd).abs() / fc.abs().max(1.0);
                if hi - lo < 1e-10 || (rel < 1e-10 && hi - lo < 1e-3) {
                    converged = true;
                    break;
                }
                if fc >= fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - phi * (hi - lo);
                    fc = eval(c.exp(), &mut trace, &mut best)?;
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + phi * (hi - lo);
                    fd = eval(d.exp(), &mut trace, &mut best)?;
                }
            }
            if !converged {
                return Err(NrbaError::NonConvergence { iterations: MAX_REFINE, trace: trace.clone() });
            }
        } else if k + 1 == GRID && lls[k] > ll0 {
            log::warn!("mixed model: variance ratio at the upper search limit");
        }
    }

    let (lambda, pr) = best.expect("at least one evaluation");
    let boundary = opts.fixed_ratio.is_none() && lambda < 1e-5;
    let (lambda, pr) = if boundary && lambda > 0.0 {
        (0.0, profile(&suff, 0.0, opts.method, labels)?)
    } else {
        (lambda, pr)
    };
    if boundary {
        log::warn!("mixed model: random-intercept variance estimated at the zero boundary");
    }
    let a_inv = pr.a.clone().cholesky().ok_or_else(|| NrbaError::Singular { columns: labels.clone() })?.inverse();
    let cov = if weights.is_some() {
        let r = &yv - x * &pr.beta;
        let mut u = DMatrix::<f64>::zeros(n_units, p);
        let mut wr = vec![0.0; n_units];
        for i in 0..n {
            let k = gidx[i];
            let mut row = u.row_mut(k);
            row += xw.row(i) * r[i];
            wr[k] += w(i) * r[i];
        }
        for k in 0..n_units {
            let c = lambda / (1.0 + lambda * suff.wsum[k]);
            let sk = suff.s.row(k) * (c * wr[k]);
            let mut row = u.row_mut(k);
            row -= sk;
        }
        let meat = u.transpose() * &u;
        &a_inv * meat * &a_inv
    } else {
        &a_inv * pr.sigma2
    };
    Ok(MixedFit {
        labels: labels.clone(),
        beta: pr.beta,
        cov: (&cov + cov.transpose()) * 0.5,
        sigma2: pr.sigma2,
        sigma0_2: lambda * pr.sigma2,
        log_lik: pr.ll,
        boundary,
        weighted: weights.is_some(),
        method: opts.method,
        trace,
        n_obs: n,
        n_units,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_is_monotone() {
        let n = 40;
        let y: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 + (i / 4) as f64).collect();
        let units: Vec<usize> = (0..n).map(|i| i / 4).collect();
        let x = DesignMatrix::with_intercept(n, &(0..n).map(|i| (i % 4) as f64).collect::<Vec<_>>(), &["t"]).unwrap();
        let fit = fit_mixed(&x, &y, &units, None, &MixedOptions::default()).unwrap();
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(fit.sigma0_2 > 0.0);
    }
}
