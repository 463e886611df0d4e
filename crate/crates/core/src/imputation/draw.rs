//! Type-specific posterior-predictive draws.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use super::spec::{ImputeMethod, ImputerSpec};
use crate::error::{NrbaError, Result};
use crate::frame::Frame;
use crate::glm::{fit_glm, fit_tree, DesignBuilder, DesignMatrix, Family, GlmFit};
use crate::linalg::cov_factor;
use crate::stats::logistic;

/// Training and target designs sharing one coding, with collinear
/// training columns removed.
pub(crate) struct Designs {
    pub train: DesignMatrix,
    pub target: DesignMatrix,
}

pub(crate) fn designs(train: &Frame, target: &Frame) -> Result<Designs> {
    let builder = DesignBuilder::learn(train, true);
    let (train_d, _) = builder.build(train)?.drop_collinear(None);
    let target_d = builder.build(target)?.select_labels(&train_d.labels)?;
    Ok(Designs { train: train_d, target: target_d })
}

/// Coefficients drawn from the large-sample normal at the MLE.
fn draw_params<R: Rng + ?Sized>(fit: &GlmFit, rng: &mut R) -> DVector<f64> {
    let l = cov_factor(&fit.cov);
    let z = DVector::from_fn(fit.params.len(), |_, _| StandardNormal.sample(rng));
    &fit.params + l * z
}

fn draw_category<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Indices of the `k` donors whose predicted means are closest to each
/// target's, ordered by distance then donor index.
pub fn donor_sets(target_means: &[f64], donor_means: &[f64], k: usize) -> Vec<Vec<usize>> {
    let n = donor_means.len();
    let k = k.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| donor_means[a].total_cmp(&donor_means[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&j| donor_means[j]).collect();
    target_means
        .iter()
        .map(|&t| {
            if k == 0 {
                return Vec::new();
            }
            // Grow a window around the insertion point to find the k-th
            // smallest distance, widen it to every donor at that distance,
            // then rank the window by (distance, index).
            let pos = sorted.partition_point(|&m| m < t);
            let (mut lo, mut hi) = (pos, pos);
            let mut kth = 0.0f64;
            for _ in 0..k {
                let left = (lo > 0).then(|| t - sorted[lo - 1]);
                let right = (hi < n).then(|| sorted[hi] - t);
                match (left, right) {
                    (Some(l), Some(r)) if l <= r => {
                        lo -= 1;
                        kth = kth.max(l);
                    }
                    (Some(l), None) => {
                        lo -= 1;
                        kth = kth.max(l);
                    }
                    (_, Some(r)) => {
                        hi += 1;
                        kth = kth.max(r);
                    }
                    (None, None) => break,
                }
            }
            while lo > 0 && t - sorted[lo - 1] <= kth {
                lo -= 1;
            }
            while hi < n && sorted[hi] - t <= kth {
                hi += 1;
            }
            let mut window: Vec<(f64, usize)> = order[lo..hi].iter().map(|&j| ((donor_means[j] - t).abs(), j)).collect();
            window.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            window.truncate(k);
            window.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Predictive mean matching: each target copies the observed value of one
/// of its `k` nearest donors, chosen uniformly.
pub fn pmm_draw<R: Rng + ?Sized>(
    target_means: &[f64],
    donor_means: &[f64],
    donor_values: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if donor_means.is_empty() {
        return Err(NrbaError::Data("empty donor pool".into()));
    }
    if donor_means.len() != donor_values.len() {
        return Err(NrbaError::Data("donor means and values differ in length".into()));
    }
    if k == 0 {
        return Err(NrbaError::Config("pmm_k must be at least 1".into()));
    }
    if donor_means.len() < k && !target_means.is_empty() {
        log::warn!("donor pool of {} is smaller than k = {k}; using the full pool", donor_means.len());
    }
    Ok(donor_sets(target_means, donor_means, k)
        .into_iter()
        .map(|set| donor_values[set[rng.random_range(0..set.len())]])
        .collect())
}

fn gaussian<R: Rng + ?Sized>(d: &Designs, y: &[f64], normal: bool, spec: &ImputerSpec, rng: &mut R) -> Result<Vec<f64>> {
    let fit = fit_glm(&d.train, y, Family::Gaussian, None)?;
    let mut beta = draw_params(&fit, rng);
    if normal {
        // Scale the draw to a sigma drawn from its scaled-inverse-chi-square posterior.
        let df = (d.train.nrows() as f64 - d.train.ncols() as f64).max(1.0);
        let chi: f64 = ChiSquared::new(df).expect("positive df").sample(rng);
        let ratio = (df / chi).sqrt();
        beta = &fit.params + (beta - &fit.params) * ratio;
        let sigma = fit.dispersion.sqrt() * ratio;
        let mean = &d.target.x * &beta;
        return Ok(mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + sigma * z
            })
            .collect());
    }
    let donor = &d.train.x * &fit.params;
    let target = &d.target.x * &beta;
    pmm_draw(target.as_slice(), donor.as_slice(), y, spec.pmm_k, rng)
}

fn tree_donor<R: Rng + ?Sized>(train: &Frame, y: &[f64], target: &Frame, spec: &ImputerSpec, rng: &mut R) -> Result<Vec<f64>> {
    let tree = fit_tree(train, y, false, &spec.tree)?;
    Ok(tree
        .route(target)?
        .into_iter()
        .map(|leaf| y[leaf.rows[rng.random_range(0..leaf.rows.len())]])
        .collect())
}

/// Categorical draw with a model over the categories present in training.
fn categorical<R: Rng + ?Sized>(d: &Designs, y: &[f64], ordinal: bool, rng: &mut R) -> Result<Vec<f64>> {
    let mut present: Vec<usize> = y.iter().map(|&v| v as usize).collect();
    present.sort_unstable();
    present.dedup();
    let remap: Vec<f64> = y.iter().map(|&v| present.iter().position(|&p| p == v as usize).expect("present") as f64).collect();
    let k = present.len();
    let (family, design) = if k == 2 && !ordinal {
        (Family::Binomial, &d.train)
    } else if ordinal {
        (Family::Ordinal { categories: k }, &d.train)
    } else {
        (Family::Multinomial { categories: k }, &d.train)
    };
    let fit = fit_glm(design, &remap, family, None)?;
    let params = draw_params(&fit, rng);
    let probs = fit.predict_proba_with(&d.target, &params)?;
    Ok((0..d.target.nrows())
        .map(|i| {
            let p: Vec<f64> = match family {
                Family::Binomial => vec![probs[(i, 0)], probs[(i, 1)]],
                _ => probs.row(i).iter().copied().collect(),
            };
            present[draw_category(&p, rng)] as f64
        })
        .collect())
}

/// Draw values for the target rows of one variable, in dataset encoding
/// (0/1 for binary, level codes for categorical).
pub(crate) fn draw_variable<R: Rng + ?Sized>(
    name: &str,
    method: ImputeMethod,
    train: &Frame,
    y: &[f64],
    target: &Frame,
    spec: &ImputerSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if target.nrows() == 0 {
        return Ok(Vec::new());
    }
    if y.is_empty() {
        return Err(NrbaError::Data("no observed values to impute from".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Ok(vec![y[0]; target.nrows()]);
    }
    let modelled = match method {
        ImputeMethod::Tree => return tree_donor(train, y, target, spec, rng),
        ImputeMethod::Pmm | ImputeMethod::Normal => {
            let d = designs(train, target)?;
            return gaussian(&d, y, method == ImputeMethod::Normal, spec, rng);
        }
        ImputeMethod::Logistic => designs(train, target).and_then(|d| {
            let fit = fit_glm(&d.train, y, Family::Binomial, None)?;
            let beta = draw_params(&fit, rng);
            let eta = &d.target.x * beta;
            Ok(eta.iter().map(|&e| f64::from(u8::from(rng.random::<f64>() < logistic(e)))).collect())
        }),
        ImputeMethod::Multinomial => designs(train, target).and_then(|d| categorical(&d, y, false, rng)),
        ImputeMethod::Ordinal => designs(train, target).and_then(|d| categorical(&d, y, true, rng)),
    };
    match modelled {
        Ok(v) => Ok(v),
        Err(e @ (NrbaError::Separation { .. } | NrbaError::NonConvergence { .. } | NrbaError::Singular { .. })) => {
            let why = match e {
                NrbaError::Separation { .. } => "separation",
                NrbaError::NonConvergence { .. } => "no convergence",
                _ => "singular design",
            };
            log::debug!("{method:?} model for `{name}`: {e}");
            log::warn!("{method:?} model for `{name}` failed ({why}); drawing from tree leaves instead");
            tree_donor(train, y, target, spec, rng)
        }
        Err(e) => Err(e),
    }
}
