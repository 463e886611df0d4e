use nalgebra::DMatrix;

use super::formula::{AnalysisFormula, Term};
use crate::error::{NrbaError, Result};
use crate::glm::DesignMatrix;
use crate::linalg::collinear_columns;
use crate::panel::{PanelDataset, VarKind, VarRef};

/// One long-format observation: dataset row and wave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LongRow {
    pub unit: usize,
    pub wave: usize,
}

/// Rows observed at their wave (available cases).
pub fn aca_rows(data: &PanelDataset) -> Vec<LongRow> {
    (0..data.n())
        .flat_map(|unit| (0..=data.waves()).filter(move |&t| data.responded(unit, t)).map(move |wave| LongRow { unit, wave }))
        .collect()
}

/// Every wave of the units observed at every wave (complete cases).
pub fn cca_rows(data: &PanelDataset) -> Vec<LongRow> {
    data.complete_cases()
        .into_iter()
        .flat_map(|unit| (0..=data.waves()).map(move |wave| LongRow { unit, wave }))
        .collect()
}

/// Every unit at every wave (completed data).
pub fn all_rows(data: &PanelDataset) -> Vec<LongRow> {
    (0..data.n()).flat_map(|unit| (0..=data.waves()).map(move |wave| LongRow { unit, wave })).collect()
}

/// Design matrix and response for a set of long rows.
#[derive(Debug, Clone)]
pub struct LongDesign {
    pub design: DesignMatrix,
    pub y: Vec<f64>,
    /// Rows actually used (rows with incomplete formula variables removed).
    pub rows: Vec<LongRow>,
    /// Empty dummy or interaction columns that were removed.
    pub dropped: Vec<String>,
}

impl LongDesign {
    /// Unit index of each row, for clustering.
    pub fn units(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.unit).collect()
    }

    pub fn waves(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.wave).collect()
    }
}

fn value(data: &PanelDataset, var: usize, row: LongRow) -> f64 {
    data.get(VarRef { var, wave: row.wave }, row.unit)
}

/// Build the fixed-effect design for `rows`. Standardized terms use the
/// mean and SD over the included rows. Empty dummy or interaction columns
/// are dropped with a warning; any remaining rank deficiency is an error.
pub fn build_design(data: &PanelDataset, rows: &[LongRow], formula: &AnalysisFormula) -> Result<LongDesign> {
    formula.validate()?;
    let mut vars = Vec::new();
    for t in &formula.terms {
        if let Some(v) = t.variable() {
            let var = data.var(v)?;
            if data.role(var).is_design() {
                return Err(NrbaError::Config(format!("design variable `{v}` cannot enter the model")));
            }
            match t {
                Term::Categorical(_) | Term::WaveBy(_) if !data.kind(var).is_categorical() => {
                    return Err(NrbaError::Config(format!("`{v}` is not categorical")));
                }
                Term::Numeric(_) | Term::Standardized(_) | Term::StandardizedSquared(_) if data.kind(var).is_categorical() => {
                    return Err(NrbaError::Config(format!("`{v}` is categorical; use cat({v})")));
                }
                _ => {}
            }
            vars.push(var);
        }
    }
    let y_var = data.outcome_var();
    let kept: Vec<LongRow> = rows
        .iter()
        .copied()
        .filter(|&r| !value(data, y_var, r).is_nan() && vars.iter().all(|&v| !value(data, v, r).is_nan()))
        .collect();
    if kept.len() < rows.len() {
        log::warn!("analysis design: {} rows with incomplete model variables removed", rows.len() - kept.len());
    }
    if kept.is_empty() {
        return Err(NrbaError::Data("no complete rows for the analysis model".into()));
    }
    let n = kept.len();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut labels = vec!["(Intercept)".to_string()];
    let max_wave = data.waves();
    let dummies = |data: &PanelDataset, var: usize| -> Vec<(String, Vec<f64>)> {
        let levels = data.kind(var).levels().expect("categorical").to_vec();
        (1..levels.len())
            .map(|l| {
                let col = kept.iter().map(|&r| f64::from(u8::from(value(data, var, r) as usize == l))).collect();
                (format!("{}[{}]", data.name(var), levels[l]), col)
            })
            .collect()
    };
    for t in &formula.terms {
        match t {
            Term::Numeric(v) => {
                let var = data.var(v)?;
                labels.push(v.clone());
                cols.push(kept.iter().map(|&r| value(data, var, r)).collect());
            }
            Term::Standardized(v) | Term::StandardizedSquared(v) => {
                let var = data.var(v)?;
                let x: Vec<f64> = kept.iter().map(|&r| value(data, var, r)).collect();
                let m = x.iter().sum::<f64>() / n as f64;
                let sd = crate::stats::sample_sd(&x);
                let z: Vec<f64> = x.iter().map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 }).collect();
                if matches!(t, Term::Standardized(_)) {
                    labels.push(format!("std({v})"));
                    cols.push(z);
                } else {
                    labels.push(format!("std({v})^2"));
                    cols.push(z.iter().map(|z| z * z).collect());
                }
            }
            Term::Categorical(v) => {
                for (l, c) in dummies(data, data.var(v)?) {
                    labels.push(l);
                    cols.push(c);
                }
            }
            Term::Wave => {
                for w in 1..=max_wave {
                    labels.push(format!("wave[{w}]"));
                    cols.push(kept.iter().map(|r| f64::from(u8::from(r.wave == w))).collect());
                }
            }
            Term::WaveBy(v) => {
                let d = dummies(data, data.var(v)?);
                for w in 1..=max_wave {
                    for (l, c) in &d {
                        labels.push(format!("wave[{w}]:{l}"));
                        cols.push(kept.iter().zip(c).map(|(r, c)| if r.wave == w { *c } else { 0.0 }).collect());
                    }
                }
            }
        }
    }
    let mut dropped = Vec::new();
    let mut keep = Vec::new();
    for (j, c) in cols.iter().enumerate() {
        if j > 0 && c.iter().all(|&v| v == 0.0) {
            dropped.push(labels[j].clone());
        } else {
            keep.push(j);
        }
    }
    if !dropped.is_empty() {
        log::warn!("analysis design: dropped empty columns {}", dropped.join(", "));
    }
    let p = keep.len();
    let x = DMatrix::from_fn(n, p, |i, j| cols[keep[j]][i]);
    let labels: Vec<String> = keep.iter().map(|&j| labels[j].clone()).collect();
    let bad = collinear_columns(&x, None);
    if !bad.is_empty() {
        return Err(NrbaError::Singular { columns: bad.iter().map(|&j| labels[j].clone()).collect() });
    }
    let design = DesignMatrix::new(x, labels, true)?;
    let y = kept.iter().map(|&r| value(data, y_var, r)).collect();
    Ok(LongDesign { design, y, rows: kept, dropped })
}

/// Whether a categorical variable is usable as a `cat()` term.
pub fn is_categorical(data: &PanelDataset, name: &str) -> bool {
    data.var(name).map(|v| matches!(data.kind(v), VarKind::Nominal(_) | VarKind::Ordinal(_))).unwrap_or(false)
}
