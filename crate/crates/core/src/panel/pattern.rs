use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::dataset::{csv_io, PanelDataset, VarRef};
use super::schema::{Role, VarKind};
use crate::error::{NrbaError, Result};

/// Unit-nonresponse rates for one level of the grouping variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRates {
    pub group: String,
    pub n: usize,
    /// Entry `t - 1` is the wave-`t` rate relative to wave 0.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemRate {
    pub variable: String,
    pub wave: usize,
    /// Units responding at the wave (denominator).
    pub n: usize,
    pub missing: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternSummary {
    pub n: usize,
    /// Distinct response vectors (waves 0..=T) with counts, most complete first.
    pub patterns: Vec<(Vec<bool>, usize)>,
    pub monotone: bool,
    /// Entry `t - 1` is `1 - n_t / n_0`.
    pub wave_rates: Vec<f64>,
    pub group_var: Option<String>,
    pub group_rates: Vec<GroupRates>,
    pub item_rates: Vec<ItemRate>,
}

fn pattern_string(p: &[bool]) -> String {
    p.iter().map(|&r| if r { '1' } else { '0' }).collect()
}

fn rates(resp: &[Vec<bool>], units: &[usize], waves: usize) -> Vec<f64> {
    let n0 = units.iter().filter(|&&u| resp[u][0]).count();
    (1..=waves)
        .map(|t| {
            if n0 == 0 {
                return 0.0;
            }
            let nt = units.iter().filter(|&&u| resp[u][t]).count();
            1.0 - nt as f64 / n0 as f64
        })
        .collect()
}

/// Response-pattern table, monotonicity verdict and nonresponse rates,
/// optionally broken down by a nominal variable.
pub fn summarize_patterns(data: &PanelDataset, group_by: Option<&str>) -> Result<PatternSummary> {
    let resp = data.response_matrix();
    let mut counts: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
    for r in &resp {
        *counts.entry(r.clone()).or_default() += 1;
    }
    let mut patterns: Vec<(Vec<bool>, usize)> = counts.into_iter().collect();
    patterns.reverse();
    let monotone = patterns.iter().all(|(p, _)| p.windows(2).all(|w| w[0] || !w[1]));
    let all: Vec<usize> = (0..data.n()).collect();
    let wave_rates = rates(&resp, &all, data.waves());

    let mut group_rates = Vec::new();
    if let Some(name) = group_by {
        let var = data.var(name)?;
        let VarKind::Nominal(levels) = data.kind(var) else {
            return Err(NrbaError::Data(format!("grouping variable `{name}` is not nominal")));
        };
        let col = data.column(VarRef { var, wave: 0 });
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); levels.len() + 1];
        for (u, &v) in col.iter().enumerate() {
            let g = if v.is_nan() { levels.len() } else { v as usize };
            members[g].push(u);
        }
        for (g, units) in members.iter().enumerate() {
            if units.is_empty() {
                continue;
            }
            let group = levels.get(g).cloned().unwrap_or_else(|| "NA".to_string());
            group_rates.push(GroupRates { group, n: units.len(), rates: rates(&resp, units, data.waves()) });
        }
    }

    let mut item_rates = Vec::new();
    for var in 0..data.schema().variables.len() {
        let role = data.role(var);
        if role.is_design() || role == Role::Outcome {
            continue;
        }
        let waves = if role.is_wave_specific() { data.waves() } else { 0 };
        for wave in 0..=waves {
            let col = data.column(VarRef { var, wave });
            let units: Vec<usize> = (0..data.n()).filter(|&u| resp[u][wave]).collect();
            let missing = units.iter().filter(|&&u| col[u].is_nan()).count();
            item_rates.push(ItemRate {
                variable: data.schema().column_name(var, wave),
                wave,
                n: units.len(),
                missing,
                rate: if units.is_empty() { 0.0 } else { missing as f64 / units.len() as f64 },
            });
        }
    }

    Ok(PatternSummary {
        n: data.n(),
        patterns,
        monotone,
        wave_rates,
        group_var: group_by.map(str::to_string),
        group_rates,
        item_rates,
    })
}

impl PatternSummary {
    pub fn write_patterns_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pattern", "count", "monotone"]).map_err(csv_io)?;
        for (p, c) in &self.patterns {
            let mono = p.windows(2).all(|w| w[0] || !w[1]);
            w.write_record([pattern_string(p), c.to_string(), mono.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per wave (and per group when grouped).
    pub fn write_rates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["group", "wave", "n", "nonresponse_rate"]).map_err(csv_io)?;
        for (t, r) in self.wave_rates.iter().enumerate() {
            w.write_record(["all".to_string(), (t + 1).to_string(), self.n.to_string(), format!("{r}")])
                .map_err(csv_io)?;
        }
        for g in &self.group_rates {
            for (t, r) in g.rates.iter().enumerate() {
                w.write_record([g.group.clone(), (t + 1).to_string(), g.n.to_string(), format!("{r}")])
                    .map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_items_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["column", "wave", "respondents", "missing", "rate"]).map_err(csv_io)?;
        for r in &self.item_rates {
            w.write_record([
                r.variable.clone(),
                r.wave.to_string(),
                r.n.to_string(),
                r.missing.to_string(),
                format!("{}", r.rate),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How intermittent returns are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneMode {
    /// Mask every wave after the first missed one.
    Drop,
    /// Fill the missed outcome (and any missing wave covariates) by a single
    /// stochastic imputation, keeping the later waves.
    Impute { seed: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MonotonizeReport {
    /// Units with an intermittent return.
    pub units: Vec<String>,
    /// `(unit id, column)` cells masked or filled.
    pub cells: Vec<(String, String)>,
}

impl MonotonizeReport {
    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Make the response pattern monotone.
pub fn monotonize(data: &PanelDataset, mode: MonotoneMode) -> Result<(PanelDataset, MonotonizeReport)> {
    let mut report = MonotonizeReport::default();
    if data.is_monotone() {
        return Ok((data.clone(), report));
    }
    let wave_vars: Vec<usize> = (0..data.schema().variables.len())
        .filter(|&v| data.role(v).is_wave_specific())
        .collect();
    let mut out = data.clone();
    match mode {
        MonotoneMode::Drop => {
            for u in 0..data.n() {
                let Some(d) = data.dropout_wave(u) else { continue };
                if !((d + 1)..=data.waves()).any(|t| data.responded(u, t)) {
                    continue;
                }
                report.units.push(data.unit_ids()[u].clone());
                for t in (d + 1)..=data.waves() {
                    for &var in &wave_vars {
                        let r = VarRef { var, wave: t };
                        if !data.get(r, u).is_nan() {
                            out.column_mut(r)[u] = f64::NAN;
                            report.cells.push((data.unit_ids()[u].clone(), data.schema().column_name(var, t)));
                        }
                    }
                }
            }
        }
        MonotoneMode::Impute { seed } => {
            let (filled, cells) = crate::imputation::fill_intermittent(data, seed)?;
            out = filled;
            for (u, col) in cells {
                let id = data.unit_ids()[u].clone();
                if report.units.last() != Some(&id) && !report.units.contains(&id) {
                    report.units.push(id.clone());
                }
                report.cells.push((id, col));
            }
        }
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::load::load_panel_str;
    use crate::panel::schema::{Schema, VariableSpec};

    fn schema() -> Schema {
        Schema {
            id: "id".into(),
            waves: 2,
            missing: vec!["".into()],
            variables: vec![
                VariableSpec::new("g", VarKind::Nominal(vec!["a".into(), "b".into()]), Role::TimeInvariant),
                VariableSpec::new("x", VarKind::Numeric, Role::TimeVarying),
                VariableSpec::new("y", VarKind::Numeric, Role::Outcome),
                VariableSpec::new("c", VarKind::Numeric, Role::ClusterId),
                VariableSpec::new("w", VarKind::Numeric, Role::BaseWeight),
            ],
        }
    }

    const TEXT: &str = "id,g,x_w0,x_w1,x_w2,y_w0,y_w1,y_w2,c,w\n\
        1,a,1,1,1,1,1,1,k,1\n\
        2,a,1,,1,1,1,1,k,1\n\
        3,b,1,1,,1,1,,k,1\n\
        4,b,1,,1,1,,1,k,1\n\
        5,b,1,,,1,,,k,1\n";

    #[test]
    fn summary_counts_and_rates() {
        let d = load_panel_str(TEXT, &schema()).unwrap();
        let s = summarize_patterns(&d, Some("g")).unwrap();
        assert_eq!(s.patterns.iter().map(|p| p.1).sum::<usize>(), 5);
        assert!(!s.monotone);
        assert!(s.wave_rates.iter().all(|r| (r - 0.4).abs() < 1e-15));
        assert_eq!(s.group_rates.len(), 2);
        assert!(s.group_rates[1].rates.iter().all(|r| (r - 2.0 / 3.0).abs() < 1e-15));
        let x1 = s.item_rates.iter().find(|r| r.variable == "x_w1").unwrap();
        assert_eq!((x1.n, x1.missing), (3, 1));
        assert!(summarize_patterns(&d, Some("x")).is_err());
    }

    #[test]
    fn drop_mode_masks_returns() {
        let d = load_panel_str(TEXT, &schema()).unwrap();
        let (m, report) = monotonize(&d, MonotoneMode::Drop).unwrap();
        assert!(m.is_monotone());
        assert_eq!(report.units, vec!["4".to_string()]);
        assert_eq!(report.cells.len(), 2);
        let (again, r2) = monotonize(&m, MonotoneMode::Drop).unwrap();
        assert_eq!(again, m);
        assert!(r2.is_empty());
    }
}
