//! Independent reference implementations and generators shared by the
//! test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use nrba::glm::DesignMatrix;
use nrba::panel::{PanelDataset, VarRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Random design with intercept; returns row-major rows including the 1.
pub fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((0..p).map(|_| normal(rng)));
            r
        })
        .collect()
}

pub fn to_design(rows: &[Vec<f64>]) -> DesignMatrix {
    let p = rows[0].len();
    let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let mut labels = vec!["(Intercept)".to_string()];
    labels.extend((1..p).map(|j| format!("x{j}")));
    DesignMatrix::new(x, labels, true).unwrap()
}

/// Plain Newton-Raphson on an analytic log-likelihood given its gradient
/// and Hessian; no step control, so it is only used on benign instances.
pub fn newton<F>(start: DVector<f64>, derivs: F) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let mut b = start;
    for _ in 0..200 {
        let (g, h) = derivs(&b);
        let step = (-h).lu().solve(&g).expect("oracle Hessian invertible");
        b += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    b
}

pub fn oracle_binomial(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> DVector<f64> {
    let p = rows[0].len();
    newton(DVector::zeros(p), |b| {
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for (i, r) in rows.iter().enumerate() {
            let x = DVector::from_column_slice(r);
            let mu = sigmoid(x.dot(b));
            g += &x * (w[i] * (y[i] - mu));
            h -= &x * x.transpose() * (w[i] * mu * (1.0 - mu));
        }
        (g, h)
    })
}

pub fn oracle_gaussian(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> DVector<f64> {
    let p = rows[0].len();
    let mut xtx = DMatrix::zeros(p, p);
    let mut xty = DVector::zeros(p);
    for (i, r) in rows.iter().enumerate() {
        let x = DVector::from_column_slice(r);
        xtx += &x * x.transpose() * w[i];
        xty += &x * (w[i] * y[i]);
    }
    xtx.lu().solve(&xty).unwrap()
}

/// Baseline-category logit, parameters stacked by non-reference category.
pub fn oracle_multinomial(rows: &[Vec<f64>], y: &[f64], w: &[f64], k: usize) -> DVector<f64> {
    let p = rows[0].len();
    let q = (k - 1) * p;
    newton(DVector::zeros(q), |b| {
        let mut g = DVector::zeros(q);
        let mut h = DMatrix::zeros(q, q);
        for (i, r) in rows.iter().enumerate() {
            let mut e = vec![1.0];
            for c in 1..k {
                let eta: f64 = (0..p).map(|j| r[j] * b[(c - 1) * p + j]).sum();
                e.push(eta.exp());
            }
            let s: f64 = e.iter().sum();
            let pr: Vec<f64> = e.iter().map(|v| v / s).collect();
            for c in 1..k {
                let ind = f64::from(u8::from(y[i] as usize == c));
                for j in 0..p {
                    g[(c - 1) * p + j] += w[i] * (ind - pr[c]) * r[j];
                }
                for d in 1..k {
                    let cov = if c == d { pr[c] * (1.0 - pr[c]) } else { -pr[c] * pr[d] };
                    for j in 0..p {
                        for l in 0..p {
                            h[((c - 1) * p + j, (d - 1) * p + l)] -= w[i] * cov * r[j] * r[l];
                        }
                    }
                }
            }
        }
        (g, h)
    })
}

/// Proportional odds with `P(Y <= c) = F(cut_c - x'b)`; analytic gradient,
/// Hessian by central differences of that gradient.
pub fn oracle_ordinal(rows: &[Vec<f64>], y: &[f64], w: &[f64], k: usize) -> DVector<f64> {
    let nc = k - 1;
    let ps = rows[0].len() - 1;
    let q = nc + ps;
    let density = |v: f64| sigmoid(v) * (1.0 - sigmoid(v));
    let grad = |b: &DVector<f64>| -> DVector<f64> {
        let mut g = DVector::zeros(q);
        for (i, r) in rows.iter().enumerate() {
            let c = y[i] as usize;
            let eta: f64 = (0..ps).map(|j| r[j + 1] * b[nc + j]).sum();
            let (fa, pa) = if c < nc { (density(b[c] - eta), sigmoid(b[c] - eta)) } else { (0.0, 1.0) };
            let (fb, pb) = if c > 0 { (density(b[c - 1] - eta), sigmoid(b[c - 1] - eta)) } else { (0.0, 0.0) };
            let pr = pa - pb;
            if c < nc {
                g[c] += w[i] * fa / pr;
            }
            if c > 0 {
                g[c - 1] -= w[i] * fb / pr;
            }
            for j in 0..ps {
                g[nc + j] -= w[i] * r[j + 1] * (fa - fb) / pr;
            }
        }
        g
    };
    let mut start = DVector::zeros(q);
    for c in 0..nc {
        start[c] = c as f64 - (nc as f64 - 1.0) / 2.0;
    }
    newton(start, |b| {
        let g = grad(b);
        let mut h = DMatrix::zeros(q, q);
        let eps = 1e-6;
        for j in 0..q {
            let mut up = b.clone();
            let mut dn = b.clone();
            up[j] += eps;
            dn[j] -= eps;
            let col = (grad(&up) - grad(&dn)) / (2.0 * eps);
            h.set_column(j, &col);
        }
        let hs = (&h + h.transpose()) * 0.5;
        (g, hs)
    })
}

pub fn draw_category(rng: &mut ChaCha8Rng, probs: &[f64]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return c as f64;
        }
    }
    (probs.len() - 1) as f64
}

pub fn max_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    (a - b).amax()
}

pub fn brute_auc(s: &[f64], l: &[f64]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] == 1.0 && l[j] == 0.0 {
                pairs += 1;
                twice += if s[i] > s[j] {
                    2
                } else if s[i] == s[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / 2.0 / pairs as f64
}

/// Rubin's rules written out independently.
pub fn pool_oracle(q: &[f64], u: &[f64]) -> (f64, f64, f64, f64, f64) {
    let m = q.len() as f64;
    let qbar = q.iter().sum::<f64>() / m;
    let ubar = u.iter().sum::<f64>() / m;
    let b = q.iter().map(|x| (x - qbar) * (x - qbar)).sum::<f64>() / (m - 1.0);
    let t = ubar + (1.0 + 1.0 / m) * b;
    let r = (1.0 + 1.0 / m) * b / ubar;
    let df = (m - 1.0) * (1.0 + 1.0 / r).powi(2);
    (qbar, ubar, b, t, df)
}

/// Weighted least squares by normal equations.
pub fn wls(x: &DMatrix<f64>, y: &[f64], w: &[f64]) -> DVector<f64> {
    let mut xw = x.clone();
    for i in 0..x.nrows() {
        xw.row_mut(i).scale_mut(w[i]);
    }
    (xw.transpose() * x).cholesky().unwrap().solve(&(xw.transpose() * DVector::from_column_slice(y)))
}

/// Long-format design `1, wave dummies, x` with AR(1) errors.
pub fn ar1_panel(n: usize, waves: usize, rho: f64, seed: u64) -> (DesignMatrix, Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    let mut y = Vec::new();
    let (mut units, mut wave) = (Vec::new(), Vec::new());
    for u in 0..n {
        let mut e = normal(&mut rng);
        for t in 0..waves {
            if t > 0 {
                e = rho * e + (1.0 - rho * rho).sqrt() * normal(&mut rng);
            }
            let x = normal(&mut rng);
            let mut row: Vec<f64> = (1..waves).map(|w| f64::from(u8::from(w == t))).collect();
            row.push(x);
            y.push(10.0 + 2.0 * t as f64 + 0.5 * x + 3.0 * e);
            data.extend(row);
            units.push(u);
            wave.push(t);
        }
    }
    let mut labels: Vec<String> = (1..waves).map(|w| format!("wave[{w}]")).collect();
    labels.push("x".into());
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    (DesignMatrix::with_intercept(y.len(), &data, &labels).unwrap(), y, units, wave)
}

/// Mean-one weights with the requested sample SD, built from a lognormal draw.
pub fn weights_with_sd(target: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s2 = (1.0 + target * target).ln();
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            (s2.sqrt() * z - s2 / 2.0).exp()
        })
        .collect();
    let m = raw.iter().sum::<f64>() / n as f64;
    let s = (raw.iter().map(|w| (w - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    raw.iter().map(|w| 1.0 + (w - m) * target / s).collect()
}

/// Every cell observed in `src` must be bit-identical in `copy`, and `copy`
/// must have no holes left.
pub fn assert_completes(src: &PanelDataset, copy: &PanelDataset) {
    for var in 0..src.schema().variables.len() {
        if src.role(var).is_design() {
            continue;
        }
        let waves = if src.role(var).is_wave_specific() { 0..=src.waves() } else { 0..=0 };
        for wave in waves {
            let r = VarRef { var, wave };
            for u in 0..src.n() {
                let (a, b) = (src.get(r, u), copy.get(r, u));
                assert!(!b.is_nan(), "{} unit {u} still missing", src.schema().column_name(var, wave));
                if !a.is_nan() {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
