//! Maximum-likelihood GLM fits by Newton / Fisher scoring with step halving.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::DesignMatrix;
use crate::error::{NrbaError, Result};
use crate::linalg::{collinear_columns, inverse_or_singular, spd_solve};
use crate::stats::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Binomial,
    Gaussian,
    /// Baseline-category logit; category 0 is the reference.
    Multinomial { categories: usize },
    /// Proportional odds: `P(Y <= k) = F(cut_k - x'beta)`.
    Ordinal { categories: usize },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Binomial => "binomial-logit",
            Family::Gaussian => "gaussian-identity",
            Family::Multinomial { .. } => "multinomial-logit",
            Family::Ordinal { .. } => "ordinal-proportional-odds",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Relative coefficient-step max-norm tolerance.
    pub tol: f64,
    /// Any |linear predictor| above this flags separation.
    pub separation_eta: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, separation_eta: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub iterations: usize,
    pub step_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub family: Family,
    /// Labels of the design columns the fit was computed on.
    pub design_labels: Vec<String>,
    pub intercept: bool,
    /// Full parameter vector. Binomial/Gaussian: one per column.
    /// Multinomial: `K-1` consecutive blocks of `p`. Ordinal: `K-1`
    /// cutpoints followed by slopes for the non-intercept columns.
    pub params: DVector<f64>,
    pub param_labels: Vec<String>,
    pub cov: DMatrix<f64>,
    pub log_lik: f64,
    /// Residual variance for the Gaussian family, 1 otherwise.
    pub dispersion: f64,
    pub n_obs: usize,
    pub weight_sum: f64,
    pub convergence: Convergence,
}

impl GlmFit {
    pub fn n_params(&self) -> usize {
        self.params.len() + usize::from(self.family == Family::Gaussian)
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }

    pub fn categories(&self) -> usize {
        match self.family {
            Family::Binomial => 2,
            Family::Gaussian => 1,
            Family::Multinomial { categories } | Family::Ordinal { categories } => categories,
        }
    }

    fn check_design(&self, x: &DesignMatrix) -> Result<()> {
        if x.labels != self.design_labels {
            return Err(NrbaError::Data(format!(
                "design columns {:?} do not match fitted columns {:?}",
                x.labels, self.design_labels
            )));
        }
        Ok(())
    }

    /// Linear predictor for binomial/gaussian fits.
    pub fn linear_predictor(&self, x: &DesignMatrix) -> Result<DVector<f64>> {
        self.linear_predictor_with(x, &self.params)
    }

    pub fn linear_predictor_with(&self, x: &DesignMatrix, params: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_design(x)?;
        match self.family {
            Family::Binomial | Family::Gaussian => Ok(&x.x * params),
            _ => Err(NrbaError::Data("linear predictor is defined for single-index families".into())),
        }
    }

    /// Category probabilities, one row per case (`K` columns; one column
    /// holding the mean for the Gaussian family).
    pub fn predict_proba(&self, x: &DesignMatrix) -> Result<DMatrix<f64>> {
        self.predict_proba_with(x, &self.params)
    }

    pub fn predict_proba_with(&self, x: &DesignMatrix, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_design(x)?;
        let n = x.nrows();
        Ok(match self.family {
            Family::Gaussian => DMatrix::from_column_slice(n, 1, (&x.x * params).as_slice()),
            Family::Binomial => {
                let eta = &x.x * params;
                DMatrix::from_fn(n, 2, |i, j| {
                    let p = logistic(eta[i]);
                    if j == 1 { p } else { 1.0 - p }
                })
            }
            Family::Multinomial { categories } => {
                let p = x.ncols();
                let mut out = DMatrix::zeros(n, categories);
                for i in 0..n {
                    let row = x.x.row(i);
                    let probs = softmax_row(&row.transpose(), params, categories, p);
                    for k in 0..categories {
                        out[(i, k)] = probs[k];
                    }
                }
                out
            }
            Family::Ordinal { categories } => {
                let slopes = ordinal_slope_design(x);
                let cuts = &params.as_slice()[..categories - 1];
                let beta = DVector::from_column_slice(&params.as_slice()[categories - 1..]);
                let eta = &slopes * beta;
                let mut out = DMatrix::zeros(n, categories);
                for i in 0..n {
                    for k in 0..categories {
                        out[(i, k)] = ordinal_prob(cuts, eta[i], k);
                    }
                }
                out
            }
        })
    }

    /// P(Y = 1) for binomial fits, the mean for Gaussian fits.
    pub fn predict(&self, x: &DesignMatrix) -> Result<Vec<f64>> {
        let probs = self.predict_proba(x)?;
        match self.family {
            Family::Binomial => Ok(probs.column(1).iter().copied().collect()),
            Family::Gaussian => Ok(probs.column(0).iter().copied().collect()),
            _ => Err(NrbaError::Data("use predict_proba for multi-category families".into())),
        }
    }
}

fn softmax_row(x: &DVector<f64>, params: &DVector<f64>, k: usize, p: usize) -> Vec<f64> {
    let mut eta = vec![0.0; k];
    for c in 1..k {
        eta[c] = (0..p).map(|j| x[j] * params[(c - 1) * p + j]).sum();
    }
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Columns entering the ordinal linear predictor (the intercept is absorbed
/// by the cutpoints).
fn ordinal_slope_design(x: &DesignMatrix) -> DMatrix<f64> {
    if x.intercept {
        x.x.columns(1, x.ncols() - 1).into_owned()
    } else {
        x.x.clone()
    }
}

fn cdf_diff(a: f64, b: f64) -> f64 {
    // F(a) - F(b) with a > b, computed on the side with less cancellation.
    if b > 0.0 {
        logistic(-b) - logistic(-a)
    } else {
        logistic(a) - logistic(b)
    }
}

fn ordinal_prob(cuts: &[f64], eta: f64, k: usize) -> f64 {
    let upper = if k < cuts.len() { cuts[k] - eta } else { f64::INFINITY };
    let lower = if k > 0 { cuts[k - 1] - eta } else { f64::NEG_INFINITY };
    cdf_diff(upper, lower)
}

fn density(u: f64) -> f64 {
    if u.is_infinite() {
        0.0
    } else {
        let f = logistic(u);
        f * (1.0 - f)
    }
}

fn rel_step(step: &DVector<f64>, params: &DVector<f64>) -> f64 {
    let smax = step.amax();
    let pmax = params.amax().max(1.0);
    smax / pmax
}

fn validate(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>, family: Family) -> Result<Vec<f64>> {
    let n = x.nrows();
    if y.len() != n {
        return Err(NrbaError::Data(format!("response has {} rows, design has {n}", y.len())));
    }
    if n == 0 {
        return Err(NrbaError::Data("no observations".into()));
    }
    let w = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(NrbaError::Data(format!("{} case weights for {n} rows", w.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(NrbaError::Data("case weights must be positive".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    for (i, &v) in y.iter().enumerate() {
        let ok = match family {
            Family::Binomial => v == 0.0 || v == 1.0,
            Family::Gaussian => v.is_finite(),
            Family::Multinomial { categories } | Family::Ordinal { categories } => {
                v >= 0.0 && v.fract() == 0.0 && (v as usize) < categories
            }
        };
        if !ok {
            return Err(NrbaError::Data(format!("response value {v} at row {i} invalid for {}", family.name())));
        }
    }
    if let Family::Multinomial { categories } | Family::Ordinal { categories } = family {
        if categories < 2 {
            return Err(NrbaError::Data("need at least two categories".into()));
        }
        let mut seen = vec![false; categories];
        for &v in y {
            seen[v as usize] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(NrbaError::Data(format!("category {k} has no observations")));
        }
    }
    Ok(w)
}

/// Fit a (case-weighted) GLM by maximum likelihood.
pub fn fit_glm(x: &DesignMatrix, y: &[f64], family: Family, case_weights: Option<&[f64]>) -> Result<GlmFit> {
    fit_glm_with(x, y, family, case_weights, &GlmOptions::default())
}

pub fn fit_glm_with(
    x: &DesignMatrix,
    y: &[f64],
    family: Family,
    case_weights: Option<&[f64]>,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    let w = validate(x, y, case_weights, family)?;
    let check = match family {
        Family::Ordinal { .. } => ordinal_slope_design(x),
        _ => x.x.clone(),
    };
    let offset = usize::from(matches!(family, Family::Ordinal { .. }) && x.intercept);
    let bad = collinear_columns(&check, Some(&w));
    if !bad.is_empty() {
        return Err(NrbaError::Singular { columns: bad.iter().map(|&j| x.labels[j + offset].clone()).collect() });
    }
    match family {
        Family::Gaussian => fit_gaussian(x, y, &w),
        Family::Binomial => fit_binomial(x, y, &w, opts),
        Family::Multinomial { categories } => fit_multinomial(x, y, &w, categories, opts),
        Family::Ordinal { categories } => fit_ordinal(x, y, &w, categories, opts),
    }
}

fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut xw = x.clone();
    for mut col in xw.column_iter_mut() {
        col.iter_mut().zip(w).for_each(|(v, wi)| *v *= wi);
    }
    let g = xw.transpose() * x;
    (&g + g.transpose()) * 0.5
}

fn fit_gaussian(x: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<GlmFit> {
    let n = x.nrows();
    let p = x.ncols();
    let xtwx = weighted_gram(&x.x, w);
    let xtwy = DVector::from_fn(p, |j, _| (0..n).map(|i| x.x[(i, j)] * w[i] * y[i]).sum());
    let beta = spd_solve(&xtwx, &xtwy).ok_or_else(|| NrbaError::Singular { columns: x.labels.clone() })?;
    let fitted = &x.x * &beta;
    let wsum: f64 = w.iter().sum();
    let rss: f64 = (0..n).map(|i| w[i] * (y[i] - fitted[i]).powi(2)).sum();
    let sigma2_ml = rss / wsum;
    let dof = (wsum - p as f64).max(1.0);
    let dispersion = rss / dof;
    let log_lik = if sigma2_ml > 0.0 {
        -0.5 * wsum * ((2.0 * std::f64::consts::PI * sigma2_ml).ln() + 1.0)
    } else {
        f64::INFINITY
    };
    let cov = inverse_or_singular(&xtwx, &x.labels)? * dispersion;
    Ok(GlmFit {
        family: Family::Gaussian,
        design_labels: x.labels.clone(),
        intercept: x.intercept,
        params: beta,
        param_labels: x.labels.clone(),
        cov,
        log_lik,
        dispersion,
        n_obs: n,
        weight_sum: wsum,
        convergence: Convergence { iterations: 1, step_norm: 0.0, converged: true },
    })
}

fn separation_error(x: &DesignMatrix, params: &[f64], _row: usize, _eta: f64) -> NrbaError {
    // Attribute the divergence at the most extreme case.
    let p = x.ncols();
    let lin = |i: usize| (0..p).map(|j| x.x[(i, j)] * params[j]).sum::<f64>();
    let row = (0..x.nrows()).max_by(|&a, &b| lin(a).abs().total_cmp(&lin(b).abs())).unwrap_or(0);
    let eta = lin(row);
    let mut contrib: Vec<(usize, f64)> = (0..p).map(|j| (j, (x.x[(row, j)] * params[j]).abs())).collect();
    contrib.sort_by(|a, b| b.1.total_cmp(&a.1));
    let cut = 0.25 * eta.abs();
    let mut columns: Vec<String> = contrib
        .iter()
        .filter(|(_, c)| *c >= cut)
        .map(|(j, _)| x.labels[*j].clone())
        .collect();
    if columns.is_empty() {
        columns.push(x.labels[contrib[0].0].clone());
    }
    NrbaError::Separation { columns }
}

fn binomial_loglik(eta: &DVector<f64>, y: &[f64], w: &[f64]) -> f64 {
    // y*eta - log(1 + e^eta), computed stably.
    eta.iter()
        .zip(y)
        .zip(w)
        .map(|((&e, &yi), &wi)| {
            let log1pe = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            wi * (yi * e - log1pe)
        })
        .sum()
}

fn fit_binomial(x: &DesignMatrix, y: &[f64], w: &[f64], opts: &GlmOptions) -> Result<GlmFit> {
    let n = x.nrows();
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    let mut eta = DVector::zeros(n);
    let mut ll = binomial_loglik(&eta, y, w);
    let mut trace = Vec::new();
    let mut conv = Convergence { iterations: 0, step_norm: f64::INFINITY, converged: false };
    for iter in 1..=opts.max_iter {
        let mut score = DVector::zeros(p);
        let mut vw = vec![0.0; n];
        for i in 0..n {
            let mu = logistic(eta[i]);
            vw[i] = w[i] * mu * (1.0 - mu);
            let r = w[i] * (y[i] - mu);
            for j in 0..p {
                score[j] += x.x[(i, j)] * r;
            }
        }
        let info = weighted_gram(&x.x, &vw);
        let delta = spd_solve(&info, &score).ok_or_else(|| NrbaError::Singular { columns: x.labels.clone() })?;
        let (new_beta, new_eta, new_ll) = halve(&beta, &delta, ll, |b| {
            let e = &x.x * b;
            let l = binomial_loglik(&e, y, w);
            (e, l)
        });
        let step = rel_step(&(&new_beta - &beta), &new_beta);
        beta = new_beta;
        eta = new_eta;
        ll = new_ll;
        trace.push(step);
        if let Some((row, e)) = eta.iter().enumerate().find(|(_, e)| e.abs() > opts.separation_eta) {
            return Err(separation_error(x, beta.as_slice(), row, *e));
        }
        conv = Convergence { iterations: iter, step_norm: step, converged: step < opts.tol };
        if conv.converged {
            break;
        }
    }
    if !conv.converged {
        return Err(NrbaError::NonConvergence { iterations: opts.max_iter, trace: tail(&trace) });
    }
    let mut vw = vec![0.0; n];
    for i in 0..n {
        let mu = logistic(eta[i]);
        vw[i] = w[i] * mu * (1.0 - mu);
    }
    let cov = inverse_or_singular(&weighted_gram(&x.x, &vw), &x.labels)?;
    Ok(GlmFit {
        family: Family::Binomial,
        design_labels: x.labels.clone(),
        intercept: x.intercept,
        params: beta,
        param_labels: x.labels.clone(),
        cov,
        log_lik: ll,
        dispersion: 1.0,
        n_obs: n,
        weight_sum: w.iter().sum(),
        convergence: conv,
    })
}

fn tail(trace: &[f64]) -> Vec<f64> {
    trace[trace.len().saturating_sub(5)..].to_vec()
}

/// Step halving: accept the first fraction of `delta` that does not decrease
/// the objective.
fn halve<F, E>(params: &DVector<f64>, delta: &DVector<f64>, current: f64, eval: F) -> (DVector<f64>, E, f64)
where
    F: Fn(&DVector<f64>) -> (E, f64),
{
    let mut scale = 1.0;
    let mut last = None;
    for _ in 0..40 {
        let cand = params + delta * scale;
        let (extra, val) = eval(&cand);
        if val.is_finite() && val >= current - 1e-12 * current.abs().max(1.0) {
            return (cand, extra, val);
        }
        last = Some((cand, extra, val));
        scale *= 0.5;
    }
    let (cand, extra, val) = last.unwrap();
    (cand, extra, val)
}

fn multinomial_loglik(x: &DMatrix<f64>, y: &[f64], w: &[f64], params: &DVector<f64>, k: usize) -> f64 {
    let p = x.ncols();
    let mut ll = 0.0;
    for i in 0..x.nrows() {
        let mut eta = vec![0.0; k];
        for c in 1..k {
            eta[c] = (0..p).map(|j| x[(i, j)] * params[(c - 1) * p + j]).sum();
        }
        let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + eta.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
        ll += w[i] * (eta[y[i] as usize] - lse);
    }
    ll
}

fn fit_multinomial(x: &DesignMatrix, y: &[f64], w: &[f64], k: usize, opts: &GlmOptions) -> Result<GlmFit> {
    let n = x.nrows();
    let p = x.ncols();
    let q = (k - 1) * p;
    let mut params = DVector::zeros(q);
    let mut ll = multinomial_loglik(&x.x, y, w, &params, k);
    let mut trace = Vec::new();
    let mut conv = Convergence { iterations: 0, step_norm: f64::INFINITY, converged: false };
    let info_at = |params: &DVector<f64>| -> (DVector<f64>, DMatrix<f64>) {
        let mut score = DVector::zeros(q);
        let mut info = DMatrix::zeros(q, q);
        for i in 0..n {
            let xi = x.x.row(i).transpose();
            let pr = softmax_row(&xi, params, k, p);
            for a in 1..k {
                let r = w[i] * (f64::from(u8::from(y[i] as usize == a)) - pr[a]);
                for j in 0..p {
                    score[(a - 1) * p + j] += r * xi[j];
                }
                for b in 1..k {
                    let v = w[i] * (if a == b { pr[a] * (1.0 - pr[a]) } else { -pr[a] * pr[b] });
                    if v == 0.0 {
                        continue;
                    }
                    for j in 0..p {
                        let vj = v * xi[j];
                        for l in 0..p {
                            info[((a - 1) * p + j, (b - 1) * p + l)] += vj * xi[l];
                        }
                    }
                }
            }
        }
        (score, info)
    };
    for iter in 1..=opts.max_iter {
        let (score, info) = info_at(&params);
        let delta = spd_solve(&info, &score).ok_or_else(|| NrbaError::Singular { columns: x.labels.clone() })?;
        let (new_params, _, new_ll) =
            halve(&params, &delta, ll, |b| ((), multinomial_loglik(&x.x, y, w, b, k)));
        let step = rel_step(&(&new_params - &params), &new_params);
        params = new_params;
        ll = new_ll;
        trace.push(step);
        for i in 0..n {
            for c in 1..k {
                let e: f64 = (0..p).map(|j| x.x[(i, j)] * params[(c - 1) * p + j]).sum();
                if e.abs() > opts.separation_eta {
                    let block: Vec<f64> = params.as_slice()[(c - 1) * p..c * p].to_vec();
                    return Err(separation_error(x, &block, i, e));
                }
            }
        }
        conv = Convergence { iterations: iter, step_norm: step, converged: step < opts.tol };
        if conv.converged {
            break;
        }
    }
    if !conv.converged {
        return Err(NrbaError::NonConvergence { iterations: opts.max_iter, trace: tail(&trace) });
    }
    let (_, info) = info_at(&params);
    let mut labels = Vec::with_capacity(q);
    for c in 1..k {
        for l in &x.labels {
            labels.push(format!("{c}:{l}"));
        }
    }
    let cov = inverse_or_singular(&info, &labels)?;
    Ok(GlmFit {
        family: Family::Multinomial { categories: k },
        design_labels: x.labels.clone(),
        intercept: x.intercept,
        params,
        param_labels: labels,
        cov,
        log_lik: ll,
        dispersion: 1.0,
        n_obs: n,
        weight_sum: w.iter().sum(),
        convergence: conv,
    })
}

/// Ordinal log-likelihood, gradient and Hessian in the natural
/// (cutpoints, slopes) parameterisation.
fn ordinal_derivs(
    z: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    cuts: &[f64],
    beta: &DVector<f64>,
    want_hessian: bool,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let nc = cuts.len();
    let q = nc + z.ncols();
    let mut ll = 0.0;
    let mut g = DVector::zeros(q);
    let mut h = if want_hessian { DMatrix::zeros(q, q) } else { DMatrix::zeros(0, 0) };
    let eta = z * beta;
    for i in 0..z.nrows() {
        let k = y[i] as usize;
        let a = if k < nc { cuts[k] - eta[i] } else { f64::INFINITY };
        let b = if k > 0 { cuts[k - 1] - eta[i] } else { f64::NEG_INFINITY };
        let pr = cdf_diff(a, b);
        if pr <= 0.0 {
            ll = f64::NEG_INFINITY;
            continue;
        }
        ll += w[i] * pr.ln();
        let fa = density(a);
        let fb = density(b);
        let la = fa / pr;
        let lb = -fb / pr;
        // u_a, u_b: gradients of a and b w.r.t. parameters.
        let mut ua = DVector::zeros(q);
        let mut ub = DVector::zeros(q);
        for j in 0..z.ncols() {
            ua[nc + j] = -z[(i, j)];
            ub[nc + j] = -z[(i, j)];
        }
        if k < nc {
            ua[k] = 1.0;
        } else {
            ua.fill(0.0);
        }
        if k > 0 {
            ub[k - 1] = 1.0;
        } else {
            ub.fill(0.0);
        }
        g.axpy(w[i] * la, &ua, 1.0);
        g.axpy(w[i] * lb, &ub, 1.0);
        if want_hessian {
            let dfa = if a.is_infinite() { 0.0 } else { fa * (1.0 - 2.0 * logistic(a)) };
            let dfb = if b.is_infinite() { 0.0 } else { fb * (1.0 - 2.0 * logistic(b)) };
            let laa = dfa / pr - la * la;
            let lbb = -dfb / pr - lb * lb;
            let lab = -la * lb;
            h += (&ua * ua.transpose()) * (w[i] * laa);
            h += (&ub * ub.transpose()) * (w[i] * lbb);
            h += (&ua * ub.transpose() + &ub * ua.transpose()) * (w[i] * lab);
        }
    }
    (ll, g, h)
}

fn fit_ordinal(x: &DesignMatrix, y: &[f64], w: &[f64], k: usize, opts: &GlmOptions) -> Result<GlmFit> {
    let z = ordinal_slope_design(x);
    let n = z.nrows();
    let ps = z.ncols();
    let nc = k - 1;
    let slope_labels: Vec<String> = x.labels[usize::from(x.intercept)..].to_vec();

    // psi = (cut_1, log(cut_2 - cut_1), ...) keeps the cutpoints increasing.
    let wsum: f64 = w.iter().sum();
    let mut cum = 0.0;
    let mut init_cuts = Vec::with_capacity(nc);
    for c in 0..nc {
        cum += (0..n).filter(|&i| y[i] as usize == c).map(|i| w[i]).sum::<f64>() / wsum;
        let pc = cum.clamp(1e-6, 1.0 - 1e-6);
        init_cuts.push((pc / (1.0 - pc)).ln());
    }
    for c in 1..nc {
        if init_cuts[c] <= init_cuts[c - 1] {
            init_cuts[c] = init_cuts[c - 1] + 1e-3;
        }
    }
    let to_natural = |psi: &DVector<f64>| -> (Vec<f64>, DVector<f64>) {
        let mut cuts = Vec::with_capacity(nc);
        for c in 0..nc {
            cuts.push(if c == 0 { psi[0] } else { cuts[c - 1] + psi[c].exp() });
        }
        (cuts, DVector::from_column_slice(&psi.as_slice()[nc..]))
    };
    let mut psi = DVector::zeros(nc + ps);
    for c in 0..nc {
        psi[c] = if c == 0 { init_cuts[0] } else { (init_cuts[c] - init_cuts[c - 1]).ln() };
    }
    let (c0, b0) = to_natural(&psi);
    let mut ll = ordinal_derivs(&z, y, w, &c0, &b0, false).0;
    let mut trace = Vec::new();
    let mut conv = Convergence { iterations: 0, step_norm: f64::INFINITY, converged: false };
    let q = nc + ps;
    for iter in 1..=opts.max_iter {
        let (cuts, beta) = to_natural(&psi);
        let (_, g, h) = ordinal_derivs(&z, y, w, &cuts, &beta, true);
        // Jacobian d(natural)/d(psi).
        let mut jac = DMatrix::identity(q, q);
        for c in 1..nc {
            jac[(c, 0)] = 1.0;
            for m in 1..=c {
                jac[(c, m)] = psi[m].exp();
            }
        }
        let gpsi = jac.transpose() * &g;
        let info = -(jac.transpose() * &h * &jac);
        let delta = spd_solve(&info, &gpsi)
            .ok_or_else(|| NrbaError::Singular { columns: slope_labels.clone() })?;
        let (new_psi, _, new_ll) = halve(&psi, &delta, ll, |p| {
            let (c, b) = to_natural(p);
            ((), ordinal_derivs(&z, y, w, &c, &b, false).0)
        });
        let step = rel_step(&(&new_psi - &psi), &new_psi);
        psi = new_psi;
        ll = new_ll;
        trace.push(step);
        let (cuts, beta) = to_natural(&psi);
        let eta = &z * &beta;
        if let Some((i, e)) = eta.iter().enumerate().find(|(_, e)| e.abs() > opts.separation_eta) {
            let mut full = vec![0.0; usize::from(x.intercept)];
            full.extend(beta.iter());
            return Err(separation_error(x, &full, i, *e));
        }
        if cuts.iter().any(|c| c.abs() > opts.separation_eta) {
            return Err(NrbaError::Separation { columns: (1..=nc).map(|c| format!("cut{c}")).collect() });
        }
        conv = Convergence { iterations: iter, step_norm: step, converged: step < opts.tol };
        if conv.converged {
            break;
        }
    }
    if !conv.converged {
        return Err(NrbaError::NonConvergence { iterations: opts.max_iter, trace: tail(&trace) });
    }
    let (cuts, beta) = to_natural(&psi);
    let (_, _, h) = ordinal_derivs(&z, y, w, &cuts, &beta, true);
    let mut labels: Vec<String> = (1..=nc).map(|c| format!("cut{c}")).collect();
    labels.extend(slope_labels);
    let cov = inverse_or_singular(&(-h), &labels)?;
    let mut params = DVector::zeros(q);
    for c in 0..nc {
        params[c] = cuts[c];
    }
    for j in 0..ps {
        params[nc + j] = beta[j];
    }
    Ok(GlmFit {
        family: Family::Ordinal { categories: k },
        design_labels: x.labels.clone(),
        intercept: x.intercept,
        params,
        param_labels: labels,
        cov,
        log_lik: ll,
        dispersion: 1.0,
        n_obs: n,
        weight_sum: wsum,
        convergence: conv,
    })
}
