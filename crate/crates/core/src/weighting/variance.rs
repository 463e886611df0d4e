use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{NrbaError, Result};
use crate::panel::PanelDataset;
use crate::rng::{domain, SeedPath};
use crate::stats::sample_sd;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedMean {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub clusters: usize,
}

/// Ratio mean `Σ w y / Σ w` with a linearization variance that treats
/// clusters as independent with-replacement draws.
pub fn weighted_mean<S: AsRef<str>>(y: &[f64], w: &[f64], clusters: &[S]) -> Result<WeightedMean> {
    let n = y.len();
    if w.len() != n || clusters.len() != n {
        return Err(NrbaError::Data("weighted_mean inputs differ in length".into()));
    }
    if y.iter().chain(w).any(|v| !v.is_finite()) {
        return Err(NrbaError::Data("weighted_mean inputs must be finite".into()));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(NrbaError::Data("weights must have a positive sum".into()));
    }
    let est = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / total;
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut totals: Vec<f64> = Vec::new();
    for i in 0..n {
        let next = totals.len();
        let c = *index.entry(clusters[i].as_ref()).or_insert(next);
        if c == totals.len() {
            totals.push(0.0);
        }
        totals[c] += w[i] * (y[i] - est) / total;
    }
    let c = totals.len();
    if c < 2 {
        return Err(NrbaError::Data("variance needs at least two clusters".into()));
    }
    let ubar = totals.iter().sum::<f64>() / c as f64;
    let var = c as f64 / (c as f64 - 1.0) * totals.iter().map(|u| (u - ubar).powi(2)).sum::<f64>();
    let se = var.sqrt();
    Ok(WeightedMean { estimate: est, se, lower: est - 1.96 * se, upper: est + 1.96 * se, n, clusters: c })
}

/// Cluster-bootstrap standard error. Each replicate draws clusters with
/// replacement and passes the resampled row indices (rows of a drawn
/// cluster repeated once per draw) to `estimator`.
pub fn bootstrap_se_indices<S, F>(clusters: &[S], estimator: F, replicates: usize, seed: u64) -> Result<f64>
where
    S: AsRef<str> + Sync,
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if replicates < 50 {
        return Err(NrbaError::Config(format!("at least 50 bootstrap replicates are required, got {replicates}")));
    }
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, c) in clusters.iter().enumerate() {
        let next = members.len();
        let k = *index.entry(c.as_ref()).or_insert(next);
        if k == members.len() {
            members.push(Vec::new());
        }
        members[k].push(i);
    }
    let nc = members.len();
    if nc < 2 {
        return Err(NrbaError::Data("bootstrap needs at least two clusters".into()));
    }
    let root = SeedPath::new(seed).child(domain::BOOTSTRAP);
    let results: Vec<Result<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.child(r as u64).rng();
            let mut rows = Vec::new();
            for _ in 0..nc {
                rows.extend_from_slice(&members[rng.random_range(0..nc)]);
            }
            estimator(&rows)
        })
        .collect();
    let mut values = Vec::with_capacity(replicates);
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => failures.push(format!("replicate {r}: non-finite estimate {v}")),
            Err(e) => failures.push(format!("replicate {r}: {e}")),
        }
    }
    if failures.len() * 20 > replicates {
        return Err(NrbaError::Numerical(format!(
            "estimator failed in {} of {replicates} bootstrap replicates: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    if !failures.is_empty() {
        log::warn!("bootstrap: {} of {replicates} replicates failed and were skipped", failures.len());
    }
    Ok(sample_sd(&values))
}

/// Cluster bootstrap over a panel: the estimator sees each resampled
/// dataset in full, so it can refit propensity models.
pub fn bootstrap_se<F>(data: &PanelDataset, clusters: &[String], estimator: F, replicates: usize, seed: u64) -> Result<f64>
where
    F: Fn(&PanelDataset) -> Result<f64> + Sync,
{
    if clusters.len() != data.n() {
        return Err(NrbaError::Data("one cluster id per unit is required".into()));
    }
    bootstrap_se_indices(clusters, |rows| estimator(&data.subset(rows)), replicates, seed)
}
