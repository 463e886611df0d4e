use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::mixed::group_index;
use crate::error::{NrbaError, Result};
use crate::glm::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkingCorrelation {
    Independence,
    #[default]
    Ar1,
}

#[derive(Debug, Clone)]
pub struct GeeOptions {
    pub working: WorkingCorrelation,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GeeOptions {
    fn default() -> Self {
        Self { working: WorkingCorrelation::Ar1, tol: 1e-8, max_iter: 100 }
    }
}

/// Gaussian identity-link GEE fit with a unit-clustered sandwich covariance.
#[derive(Debug, Clone)]
pub struct GeeFit {
    pub labels: Vec<String>,
    pub beta: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub working: WorkingCorrelation,
    /// Lag-one working correlation (0 under independence).
    pub rho: f64,
    pub rho_clipped: bool,
    /// Weighted residual variance.
    pub phi: f64,
    pub iterations: usize,
    pub weighted: bool,
}

impl GeeFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.beta.len()).map(|i| self.cov[(i, i)].max(0.0).sqrt()).collect()
    }

    pub fn coef(&self, label: &str) -> Option<(f64, f64)> {
        let i = self.labels.iter().position(|l| l == label)?;
        Some((self.beta[i], self.cov[(i, i)].max(0.0).sqrt()))
    }
}

const RHO_CLIP: f64 = 0.99;

struct Cluster {
    rows: Vec<usize>,
    x: DMatrix<f64>,
    y: DVector<f64>,
    w: Vec<f64>,
}

fn cluster_weight_matrix(c: &Cluster, waves: &[usize], rho: f64) -> Result<DMatrix<f64>> {
    let m = c.rows.len();
    let r = DMatrix::from_fn(m, m, |a, b| {
        let d = waves[c.rows[a]].abs_diff(waves[c.rows[b]]);
        if d == 0 { 1.0 } else { rho.powi(d as i32) }
    });
    let rinv = if rho == 0.0 {
        r
    } else {
        r.cholesky().ok_or_else(|| NrbaError::Numerical("working correlation not positive definite".into()))?.inverse()
    };
    // R^{-1} W
    Ok(DMatrix::from_fn(m, m, |a, b| rinv[(a, b)] * c.w[b]))
}

/// Solve `sum_i X_i' R_i^{-1} W_i (y_i - X_i beta) = 0`, re-estimating the
/// AR(1) parameter from lag-one residual products between iterations.
pub fn fit_gee(
    design: &DesignMatrix,
    y: &[f64],
    units: &[usize],
    waves: &[usize],
    weights: Option<&[f64]>,
    opts: &GeeOptions,
) -> Result<GeeFit> {
    let (n, p) = design.x.shape();
    if y.len() != n || units.len() != n || waves.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(NrbaError::Data("GEE inputs have inconsistent lengths".into()));
    }
    if let Some(w) = weights {
        if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(NrbaError::Data("GEE weights must be positive".into()));
        }
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (gidx, n_units) = group_index(units);
    let mut members = vec![Vec::new(); n_units];
    for (i, &g) in gidx.iter().enumerate() {
        members[g].push(i);
    }
    let clusters: Vec<Cluster> = members
        .into_iter()
        .map(|mut rows| {
            rows.sort_by_key(|&i| waves[i]);
            let x = design.x.select_rows(rows.iter());
            let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
            let wv = rows.iter().map(|&i| w(i)).collect();
            Cluster { rows, x, y: yv, w: wv }
        })
        .collect();
    for c in &clusters {
        if c.rows.windows(2).any(|r| waves[r[0]] == waves[r[1]]) {
            return Err(NrbaError::Data("GEE: a unit has two rows at the same wave".into()));
        }
    }
    let labels = &design.labels;

    let solve = |rho: f64| -> Result<(DVector<f64>, DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let mut a = DMatrix::zeros(p, p);
        let mut b = DVector::zeros(p);
        let mut mats = Vec::with_capacity(clusters.len());
        for c in &clusters {
            let m = cluster_weight_matrix(c, waves, rho)?;
            let xtm = c.x.transpose() * &m;
            a += &xtm * &c.x;
            b += &xtm * &c.y;
            mats.push(m);
        }
        let lu = a.clone().lu();
        let beta = lu.solve(&b).ok_or_else(|| NrbaError::Singular { columns: labels.clone() })?;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(NrbaError::Singular { columns: labels.clone() });
        }
        Ok((beta, a, mats))
    };

    let moments = |beta: &DVector<f64>| -> (f64, Option<f64>) {
        let (mut ss, mut ws) = (0.0, 0.0);
        let (mut cross, mut pw) = (0.0, 0.0);
        for c in &clusters {
            let r = &c.y - &c.x * beta;
            for j in 0..r.len() {
                ss += c.w[j] * r[j] * r[j];
                ws += c.w[j];
                if j > 0 && waves[c.rows[j]] == waves[c.rows[j - 1]] + 1 {
                    let sw = (c.w[j] * c.w[j - 1]).sqrt();
                    cross += sw * r[j] * r[j - 1];
                    pw += sw;
                }
            }
        }
        let phi = ss / ws;
        (phi, (pw > 0.0).then(|| cross / (phi * pw)))
    };

    let (mut beta, mut a, mut mats) = solve(0.0)?;
    let mut rho = 0.0;
    let mut clipped = false;
    let mut iterations = 1;
    if opts.working == WorkingCorrelation::Ar1 {
        let mut steps = Vec::new();
        let mut converged = false;
        for it in 0..opts.max_iter {
            let (_, r) = moments(&beta);
            rho = match r {
                Some(r) if r.abs() >= 1.0 => {
                    if !clipped {
                        log::warn!("GEE: lag-one correlation estimate {r:.3} clipped to +/-{RHO_CLIP}");
                    }
                    clipped = true;
                    r.signum() * RHO_CLIP
                }
                Some(r) => r.clamp(-RHO_CLIP, RHO_CLIP),
                None => {
                    log::warn!("GEE: no consecutive-wave pairs; working correlation set to 0");
                    0.0
                }
            };
            let (nb, na, nm) = solve(rho)?;
            let step = (&nb - &beta).iter().zip(nb.iter()).map(|(d, b)| d.abs() / (1.0 + b.abs())).fold(0.0, f64::max);
            steps.push(step);
            beta = nb;
            a = na;
            mats = nm;
            iterations = it + 2;
            if step < opts.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(NrbaError::NonConvergence { iterations: opts.max_iter, trace: steps });
        }
    }
    let (phi, _) = moments(&beta);
    let mut meat = DMatrix::zeros(p, p);
    for (c, m) in clusters.iter().zip(&mats) {
        let r = &c.y - &c.x * &beta;
        let u = c.x.transpose() * (m * r);
        meat += &u * u.transpose();
    }
    let a_inv = a.clone().try_inverse().ok_or_else(|| NrbaError::Singular { columns: labels.clone() })?;
    let cov = &a_inv * meat * a_inv.transpose();
    Ok(GeeFit {
        labels: labels.clone(),
        beta,
        cov: (&cov + cov.transpose()) * 0.5,
        working: opts.working,
        rho,
        rho_clipped: clipped,
        phi,
        iterations,
        weighted: weights.is_some(),
    })
}
