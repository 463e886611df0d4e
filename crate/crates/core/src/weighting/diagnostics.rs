use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::panel::dataset::csv_io;
use crate::stats::{mean, quantile_sorted, sample_var};

/// Outcome summary for one weight quintile group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuintileSummary {
    pub quintile: usize,
    pub n: usize,
    pub weight_min: f64,
    pub weight_max: f64,
    pub outcome_mean: f64,
    pub outcome_q1: f64,
    pub outcome_median: f64,
    pub outcome_q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample SD (divisor `n - 1`).
    pub sd: f64,
    /// `var(w) / mean(w)^2`, the squared coefficient of variation.
    pub loss: f64,
    /// `1 + loss`.
    pub deff: f64,
    pub quintiles: Vec<QuintileSummary>,
}

/// Summary statistics of a weight vector and, with an outcome, the outcome
/// distribution across weight quintile groups.
pub fn weight_diagnostics(weights: &[f64], outcome: Option<&[f64]>) -> WeightDiagnostics {
    let n = weights.len();
    let mut sorted = weights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = mean(weights);
    // Constant weights get an exact zero rather than rounding noise.
    let flat = weights.iter().all(|w| *w == weights[0]);
    let var = if n > 1 && !flat { sample_var(weights) } else { 0.0 };
    let loss = if m > 0.0 { var / (m * m) } else { 0.0 };
    let q = |p: f64| if n == 0 { f64::NAN } else { quantile_sorted(&sorted, p) };
    let mut quintiles = Vec::new();
    if let Some(y) = outcome.filter(|y| y.len() == n && n >= 5) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(a.cmp(&b)));
        for g in 0..5 {
            let members = &order[g * n / 5..(g + 1) * n / 5];
            let mut ys: Vec<f64> = members.iter().map(|&i| y[i]).collect();
            ys.sort_by(f64::total_cmp);
            quintiles.push(QuintileSummary {
                quintile: g + 1,
                n: members.len(),
                weight_min: weights[members[0]],
                weight_max: weights[*members.last().expect("nonempty quintile")],
                outcome_mean: mean(&ys),
                outcome_q1: quantile_sorted(&ys, 0.25),
                outcome_median: quantile_sorted(&ys, 0.5),
                outcome_q3: quantile_sorted(&ys, 0.75),
            });
        }
    }
    WeightDiagnostics {
        n,
        min: q(0.0),
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: q(1.0),
        mean: m,
        sd: var.sqrt(),
        loss,
        deff: 1.0 + loss,
        quintiles,
    }
}

/// Diagnostics table: one row per labelled weight set.
pub fn write_diagnostics_csv<W: Write>(rows: &[(String, WeightDiagnostics)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["weights", "min", "q1", "median", "q3", "max", "sd", "loss", "deff", "n"]).map_err(csv_io)?;
    for (label, d) in rows {
        let mut rec = vec![label.clone()];
        rec.extend([d.min, d.q1, d.median, d.q3, d.max, d.sd, d.loss, d.deff].iter().map(|v| format!("{v}")));
        rec.push(d.n.to_string());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome-by-weight-quintile table.
pub fn write_quintiles_csv<W: Write>(rows: &[(String, WeightDiagnostics)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["weights", "quintile", "n", "weight_min", "weight_max", "mean", "q1", "median", "q3"])
        .map_err(csv_io)?;
    for (label, d) in rows {
        for q in &d.quintiles {
            w.write_record([
                label.clone(),
                q.quintile.to_string(),
                q.n.to_string(),
                format!("{}", q.weight_min),
                format!("{}", q.weight_max),
                format!("{}", q.outcome_mean),
                format!("{}", q.outcome_q1),
                format!("{}", q.outcome_median),
                format!("{}", q.outcome_q3),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}
