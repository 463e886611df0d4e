use nalgebra::{DMatrix, DVector};

use crate::error::{NrbaError, Result};

/// Indices of columns that are (numerically) linear combinations of earlier
/// columns, found by modified Gram-Schmidt on `x` with optional row weights.
pub fn collinear_columns(x: &DMatrix<f64>, row_weights: Option<&[f64]>) -> Vec<usize> {
    let (n, p) = x.shape();
    let scale: Vec<f64> = match row_weights {
        Some(w) => w.iter().map(|v| v.max(0.0).sqrt()).collect(),
        None => vec![1.0; n],
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..p {
        let mut v: Vec<f64> = x.column(j).iter().zip(&scale).map(|(a, s)| a * s).collect();
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            dropped.push(j);
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(b, &v);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= proj * bi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm <= 1e-9 * norm0 {
            dropped.push(j);
        } else {
            v.iter_mut().for_each(|vi| *vi /= norm);
            basis.push(v);
        }
    }
    dropped
}

pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse())
}

/// Inverse of a general square matrix, failing with the given labels
/// attached when it is singular.
pub fn inverse_or_singular(a: &DMatrix<f64>, labels: &[String]) -> Result<DMatrix<f64>> {
    if let Some(inv) = spd_inverse(a) {
        return Ok(inv);
    }
    a.clone().try_inverse().ok_or_else(|| NrbaError::Singular {
        columns: labels.to_vec(),
    })
}

/// Lower Cholesky factor of a covariance matrix, adding diagonal jitter
/// when the matrix is only positive semidefinite.
pub fn cov_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let p = sym.nrows();
    let base = (0..p).map(|i| sym[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let m = &sym + DMatrix::identity(p, p) * jitter;
        if let Some(c) = m.cholesky() {
            return c.l();
        }
        jitter = if jitter == 0.0 { base * 1e-12 } else { jitter * 100.0 };
    }
    // Fall back to the diagonal.
    DMatrix::from_fn(p, p, |i, j| if i == j { sym[(i, i)].max(0.0).sqrt() } else { 0.0 })
}
