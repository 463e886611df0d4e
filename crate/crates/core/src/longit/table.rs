use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::design::{aca_rows, all_rows, cca_rows, build_design, LongDesign, LongRow};
use super::formula::AnalysisFormula;
use super::gee::{fit_gee, GeeOptions, WorkingCorrelation};
use super::mixed::{fit_mixed, MixedOptions};
use crate::error::{NrbaError, Result};
use crate::imputation::{pool, ImputationSet};
use crate::panel::dataset::csv_io;
use crate::panel::{PanelDataset, VarRef};
use crate::weighting::{weighted_mean, Provenance, WeightRecord, WeightSet};

/// Estimation method labels used in result tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodTag {
    Cca,
    Aca,
    CcaBaseW,
    AcaBaseW,
    CcaAttrW,
    AcaAttrW,
    AcaSeqAttrW,
    MiSeq,
    Ml,
    WMl,
    Gee,
    WGee,
    MiOffset(f64),
}

pub const FIXED_TAGS: [MethodTag; 12] = [
    MethodTag::Cca,
    MethodTag::Aca,
    MethodTag::CcaBaseW,
    MethodTag::AcaBaseW,
    MethodTag::CcaAttrW,
    MethodTag::AcaAttrW,
    MethodTag::AcaSeqAttrW,
    MethodTag::MiSeq,
    MethodTag::Ml,
    MethodTag::WMl,
    MethodTag::Gee,
    MethodTag::WGee,
];

impl MethodTag {
    pub fn parse(s: &str) -> Result<MethodTag> {
        let s = s.trim();
        if let Some(t) = FIXED_TAGS.iter().find(|t| t.to_string() == s) {
            return Ok(*t);
        }
        if let Some(k) = s.strip_prefix("MI-offset(").and_then(|r| r.strip_suffix(')')) {
            if let Ok(k) = k.trim().parse::<f64>() {
                if k.is_finite() {
                    return Ok(MethodTag::MiOffset(k));
                }
            }
        }
        let valid: Vec<String> = FIXED_TAGS.iter().map(|t| t.to_string()).collect();
        Err(NrbaError::Config(format!("unknown method tag `{s}`; valid tags: {}, MI-offset(<k>)", valid.join(", "))))
    }

    fn rank(self) -> usize {
        FIXED_TAGS.iter().position(|t| *t == self).unwrap_or(FIXED_TAGS.len())
    }

    /// Table order: the fixed tags as listed, then offsets from the
    /// mildest to the strongest.
    pub fn order(a: &MethodTag, b: &MethodTag) -> std::cmp::Ordering {
        match (a, b) {
            (MethodTag::MiOffset(x), MethodTag::MiOffset(y)) => y.total_cmp(x),
            _ => a.rank().cmp(&b.rank()),
        }
    }

    pub fn needs_weights(self) -> bool {
        matches!(self, MethodTag::CcaAttrW | MethodTag::AcaAttrW | MethodTag::AcaSeqAttrW | MethodTag::WMl | MethodTag::WGee)
    }

    /// The imputation offset this tag reads, if any.
    pub fn offset(self) -> Option<f64> {
        match self {
            MethodTag::MiSeq => Some(0.0),
            MethodTag::MiOffset(k) => Some(k),
            _ => None,
        }
    }
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MethodTag::Cca => "CCA",
            MethodTag::Aca => "ACA",
            MethodTag::CcaBaseW => "CCA-base-w",
            MethodTag::AcaBaseW => "ACA-base-w",
            MethodTag::CcaAttrW => "CCA-attr-w",
            MethodTag::AcaAttrW => "ACA-attr-w",
            MethodTag::AcaSeqAttrW => "ACA-seq-attr-w",
            MethodTag::MiSeq => "MI-seq",
            MethodTag::Ml => "ML",
            MethodTag::WMl => "w-ML",
            MethodTag::Gee => "GEE",
            MethodTag::WGee => "w-GEE",
            MethodTag::MiOffset(k) => return write!(f, "MI-offset({k})"),
        };
        f.write_str(s)
    }
}

/// Attrition weights indexed by provenance, wave and dataset row.
#[derive(Debug, Clone, Default)]
pub struct WeightBundle {
    sets: HashMap<(Provenance, usize), Vec<f64>>,
}

impl WeightBundle {
    pub fn from_sets(data: &PanelDataset, sets: &[WeightSet]) -> Self {
        let mut b = WeightBundle::default();
        for s in sets {
            let col = b.sets.entry((s.provenance, s.wave)).or_insert_with(|| vec![f64::NAN; data.n()]);
            for (&u, &w) in s.units.iter().zip(&s.weights) {
                col[u] = w;
            }
        }
        b
    }

    /// Match weight records to dataset rows by unit id.
    pub fn from_records(data: &PanelDataset, records: &[WeightRecord]) -> Result<Self> {
        let index: HashMap<&str, usize> = data.unit_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut b = WeightBundle::default();
        for r in records {
            let u = *index
                .get(r.unit_id.as_str())
                .ok_or_else(|| NrbaError::Data(format!("weight file names unknown unit `{}`", r.unit_id)))?;
            b.sets.entry((r.provenance, r.wave)).or_insert_with(|| vec![f64::NAN; data.n()])[u] = r.weight;
        }
        Ok(b)
    }

    pub fn get(&self, provenance: Provenance, wave: usize, unit: usize) -> Option<f64> {
        self.sets.get(&(provenance, wave)).map(|c| c[unit]).filter(|w| w.is_finite())
    }

    pub fn has(&self, provenance: Provenance) -> bool {
        self.sets.keys().any(|(p, _)| *p == provenance)
    }
}

/// Everything `estimate_table` may draw on.
pub struct EstimationInputs<'a> {
    pub data: &'a PanelDataset,
    pub formula: &'a AnalysisFormula,
    /// Nominal variable for subgroup-by-wave means.
    pub group: Option<&'a str>,
    pub weights: Option<&'a WeightBundle>,
    pub imputations: Vec<&'a ImputationSet>,
    pub working: WorkingCorrelation,
    /// Weighted ML and GEE use `w^weight_power` (1 by default).
    pub weight_power: f64,
}

impl<'a> EstimationInputs<'a> {
    pub fn new(data: &'a PanelDataset, formula: &'a AnalysisFormula) -> Self {
        EstimationInputs {
            data,
            formula,
            group: None,
            weights: None,
            imputations: Vec::new(),
            working: WorkingCorrelation::Ar1,
            weight_power: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub method: String,
    pub estimand: String,
    pub est: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EstimateTable {
    pub rows: Vec<EstimateRow>,
}

impl EstimateTable {
    pub fn get(&self, method: &str, estimand: &str) -> Option<&EstimateRow> {
        self.rows.iter().find(|r| r.method == method && r.estimand == estimand)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, r) in csv::Reader::from_reader(input).deserialize().enumerate() {
            rows.push(r.map_err(|e: csv::Error| NrbaError::Parse { row: i + 2, column: String::new(), message: e.to_string() })?);
        }
        Ok(EstimateTable { rows })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Subgroup-by-wave means and wave-by-group coefficients in long form
    /// for plotting.
    pub fn write_wave_group_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "kind", "wave", "group", "level", "est", "se", "lower", "upper"]).map_err(csv_io)?;
        for r in &self.rows {
            let Some((kind, wave, group, level)) = split_wave_group(&r.estimand) else { continue };
            let nums = [r.est, r.se, r.lower, r.upper].map(|v| v.to_string());
            w.write_record([r.method.as_str(), kind, wave, group, level, &nums[0], &nums[1], &nums[2], &nums[3]])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `mean[w3|race=black]` or `coef[wave[3]:race[black]]` into
/// (kind, wave, group, level).
fn split_wave_group(estimand: &str) -> Option<(&str, &str, &str, &str)> {
    if let Some(inner) = estimand.strip_prefix("mean[w").and_then(|s| s.strip_suffix(']')) {
        let (wave, rest) = inner.split_once('|')?;
        let (group, level) = rest.split_once('=')?;
        return Some(("mean", wave, group, level));
    }
    let inner = estimand.strip_prefix("coef[wave[")?.strip_suffix("]]")?;
    let (wave, rest) = inner.split_once("]:")?;
    let (group, level) = rest.split_once('[')?;
    Some(("coef", wave, group, level))
}

fn wave_estimand(t: usize) -> String {
    format!("mean[w{t}]")
}

struct Est {
    estimand: String,
    est: f64,
    se: f64,
    lower: f64,
    upper: f64,
}

/// Descriptive means over the given long rows and their weights.
fn descriptive(data: &PanelDataset, rows: &[(LongRow, f64)], group: Option<&str>) -> Result<Vec<Est>> {
    let y = data.outcome_var();
    let ids = data.unit_ids();
    let mean = |sel: &[&(LongRow, f64)], estimand: String| -> Result<Option<Est>> {
        if sel.is_empty() {
            return Ok(None);
        }
        let yv: Vec<f64> = sel.iter().map(|(r, _)| data.get(VarRef { var: y, wave: r.wave }, r.unit)).collect();
        let wv: Vec<f64> = sel.iter().map(|(_, w)| *w).collect();
        let cl: Vec<&str> = sel.iter().map(|(r, _)| ids[r.unit].as_str()).collect();
        match weighted_mean(&yv, &wv, &cl) {
            Ok(m) => Ok(Some(Est { estimand, est: m.estimate, se: m.se, lower: m.lower, upper: m.upper })),
            Err(NrbaError::Data(msg)) if msg.contains("two clusters") => {
                log::warn!("{estimand}: fewer than two units, estimate skipped");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let mut out = Vec::new();
    let all: Vec<&(LongRow, f64)> = rows.iter().collect();
    out.extend(mean(&all, "mean[overall]".into())?);
    for t in 0..=data.waves() {
        let sel: Vec<_> = rows.iter().filter(|(r, _)| r.wave == t).collect();
        out.extend(mean(&sel, wave_estimand(t))?);
    }
    if let Some(g) = group {
        let gv = data.var(g)?;
        let levels = data.kind(gv).levels().ok_or_else(|| NrbaError::Config(format!("group variable `{g}` is not categorical")))?;
        for t in 0..=data.waves() {
            for (l, level) in levels.iter().enumerate() {
                let sel: Vec<_> = rows
                    .iter()
                    .filter(|(r, _)| r.wave == t && data.get(VarRef { var: gv, wave: t }, r.unit) == l as f64)
                    .collect();
                out.extend(mean(&sel, format!("mean[w{t}|{g}={level}]"))?);
            }
        }
    }
    Ok(out)
}

fn normal_est(estimand: String, est: f64, se: f64) -> Est {
    Est { estimand, est, se, lower: est - 1.96 * se, upper: est + 1.96 * se }
}

enum Model {
    Mixed,
    Gee(WorkingCorrelation),
}

fn fit_model(ld: &LongDesign, weights: Option<&[f64]>, model: &Model) -> Result<(Vec<String>, Vec<f64>, nalgebra::DMatrix<f64>)> {
    let units = ld.units();
    match model {
        Model::Mixed => {
            let f = fit_mixed(&ld.design, &ld.y, &units, weights, &MixedOptions::default())?;
            Ok((f.labels, f.beta.iter().copied().collect(), f.cov))
        }
        Model::Gee(working) => {
            let opts = GeeOptions { working: *working, ..GeeOptions::default() };
            let f = fit_gee(&ld.design, &ld.y, &units, &ld.waves(), weights, &opts)?;
            Ok((f.labels, f.beta.iter().copied().collect(), f.cov))
        }
    }
}

/// Wave means from the saturated wave model, then the formula coefficients.
fn model_rows(
    data: &PanelDataset,
    rows: &[LongRow],
    weight_of: &dyn Fn(LongRow) -> Result<f64>,
    weighted: bool,
    formula: &AnalysisFormula,
    model: &Model,
) -> Result<Vec<Est>> {
    let mut out = Vec::new();
    let ld = build_design(data, rows, &AnalysisFormula::wave_means())?;
    let w: Option<Vec<f64>> = if weighted { Some(ld.rows.iter().map(|r| weight_of(*r)).collect::<Result<_>>()?) } else { None };
    let (labels, beta, cov) = fit_model(&ld, w.as_deref(), model)?;
    for t in 0..=data.waves() {
        let label = format!("wave[{t}]");
        let (est, var) = match labels.iter().position(|l| *l == label) {
            Some(j) => (beta[0] + beta[j], cov[(0, 0)] + cov[(j, j)] + 2.0 * cov[(0, j)]),
            None if t == 0 => (beta[0], cov[(0, 0)]),
            None => continue,
        };
        out.push(normal_est(wave_estimand(t), est, var.max(0.0).sqrt()));
    }
    let ld = build_design(data, rows, formula)?;
    let w: Option<Vec<f64>> = if weighted { Some(ld.rows.iter().map(|r| weight_of(*r)).collect::<Result<_>>()?) } else { None };
    let (labels, beta, cov) = fit_model(&ld, w.as_deref(), model)?;
    for (j, l) in labels.iter().enumerate() {
        out.push(normal_est(format!("coef[{l}]"), beta[j], cov[(j, j)].max(0.0).sqrt()));
    }
    Ok(out)
}

fn imputation_offset(set: &ImputationSet) -> f64 {
    set.offsets.first().copied().unwrap_or(0.0)
}

fn mi_rows(set: &ImputationSet, formula: &AnalysisFormula, group: Option<&str>) -> Result<Vec<Est>> {
    let per_copy: Vec<Vec<Est>> = set
        .copies
        .iter()
        .map(|copy| {
            let rows: Vec<(LongRow, f64)> = all_rows(copy).into_iter().map(|r| (r, copy.base_weights()[r.unit])).collect();
            let mut est = descriptive(copy, &rows, group)?;
            let ld = build_design(copy, &all_rows(copy), formula)?;
            let (labels, beta, cov) = fit_model(&ld, None, &Model::Mixed)?;
            for (j, l) in labels.iter().enumerate() {
                est.push(normal_est(format!("coef[{l}]"), beta[j], cov[(j, j)].max(0.0).sqrt()));
            }
            Ok(est)
        })
        .collect::<Result<_>>()?;
    let first = &per_copy[0];
    let mut out = Vec::new();
    for e in first {
        let mut q = Vec::with_capacity(per_copy.len());
        let mut u = Vec::with_capacity(per_copy.len());
        for c in &per_copy {
            if let Some(x) = c.iter().find(|x| x.estimand == e.estimand) {
                q.push(x.est);
                u.push(x.se * x.se);
            }
        }
        if q.len() != per_copy.len() {
            log::warn!("{}: not estimable in every imputed copy, skipped", e.estimand);
            continue;
        }
        let p = pool(&q, &u)?;
        out.push(Est { estimand: e.estimand.clone(), est: p.estimate, se: p.se, lower: p.lower, upper: p.upper });
    }
    Ok(out)
}

/// One row per method and estimand, sorted by method.
pub fn estimate_table(inputs: &EstimationInputs<'_>, methods: &[MethodTag]) -> Result<EstimateTable> {
    let data = inputs.data;
    let mut methods = methods.to_vec();
    methods.sort_by(MethodTag::order);
    methods.dedup();
    let base = data.base_weights();
    let cca = cca_rows(data);
    let aca = aca_rows(data);
    let mut table = EstimateTable::default();
    for m in methods {
        let bundle = match (m.needs_weights(), inputs.weights) {
            (true, None) => {
                return Err(NrbaError::Config(format!("method {m} needs attrition weights; run `weights` first")));
            }
            (_, b) => b,
        };
        let need = |prov: Provenance, wave: usize, unit: usize| -> Result<f64> {
            if wave == 0 && prov != Provenance::CcaAttr {
                return Ok(base[unit]);
            }
            let b = bundle.expect("checked above");
            let wave = if prov == Provenance::CcaAttr { data.waves() } else { wave };
            b.get(prov, wave, unit).ok_or_else(|| {
                NrbaError::Data(format!("no {prov} weight for unit `{}` at wave {wave}", data.unit_ids()[unit]))
            })
        };
        let with = |rows: &[LongRow], f: &dyn Fn(LongRow) -> Result<f64>| -> Result<Vec<(LongRow, f64)>> {
            rows.iter().map(|&r| Ok((r, f(r)?))).collect()
        };
        let ests = match m {
            MethodTag::Cca => descriptive(data, &with(&cca, &|_| Ok(1.0))?, inputs.group)?,
            MethodTag::Aca => descriptive(data, &with(&aca, &|_| Ok(1.0))?, inputs.group)?,
            MethodTag::CcaBaseW => descriptive(data, &with(&cca, &|r| Ok(base[r.unit]))?, inputs.group)?,
            MethodTag::AcaBaseW => descriptive(data, &with(&aca, &|r| Ok(base[r.unit]))?, inputs.group)?,
            MethodTag::CcaAttrW => descriptive(data, &with(&cca, &|r| need(Provenance::CcaAttr, r.wave, r.unit))?, inputs.group)?,
            MethodTag::AcaAttrW => descriptive(data, &with(&aca, &|r| need(Provenance::AcaAttr, r.wave, r.unit))?, inputs.group)?,
            MethodTag::AcaSeqAttrW => {
                descriptive(data, &with(&aca, &|r| need(Provenance::AcaSeqAttr, r.wave, r.unit))?, inputs.group)?
            }
            MethodTag::Ml | MethodTag::WMl | MethodTag::Gee | MethodTag::WGee => {
                let weighted = matches!(m, MethodTag::WMl | MethodTag::WGee);
                let model = if matches!(m, MethodTag::Ml | MethodTag::WMl) { Model::Mixed } else { Model::Gee(inputs.working) };
                let wf = |r: LongRow| need(Provenance::AcaSeqAttr, r.wave, r.unit).map(|w| w.powf(inputs.weight_power));
                model_rows(data, &aca, &wf, weighted, inputs.formula, &model).map_err(|e| e.context(format!("method {m}")))?
            }
            MethodTag::MiSeq | MethodTag::MiOffset(_) => {
                let k = m.offset().expect("imputation tag");
                let set = inputs.imputations.iter().find(|s| (imputation_offset(s) - k).abs() < 1e-9).ok_or_else(|| {
                    NrbaError::Config(format!("method {m} needs imputations with offset {k}; run `impute` or `sensitivity` first"))
                })?;
                mi_rows(set, inputs.formula, inputs.group).map_err(|e| e.context(format!("method {m}")))?
            }
        };
        table.rows.extend(ests.into_iter().map(|e| EstimateRow {
            method: m.to_string(),
            estimand: e.estimand,
            est: e.est,
            se: e.se,
            lower: e.lower,
            upper: e.upper,
        }));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_round_trip() {
        for t in FIXED_TAGS {
            assert_eq!(MethodTag::parse(&t.to_string()).unwrap(), t);
        }
        assert_eq!(MethodTag::parse("MI-offset(-1.2)").unwrap(), MethodTag::MiOffset(-1.2));
        let err = MethodTag::parse("FOO").unwrap_err().to_string();
        assert!(err.contains("ACA-seq-attr-w") && err.contains("MI-offset"));
    }

    #[test]
    fn wave_group_labels() {
        assert_eq!(split_wave_group("mean[w3|race=black]"), Some(("mean", "3", "race", "black")));
        assert_eq!(split_wave_group("coef[wave[2]:race[asian]]"), Some(("coef", "2", "race", "asian")));
        assert_eq!(split_wave_group("coef[wave[2]]"), None);
        assert_eq!(split_wave_group("mean[w2]"), None);
    }

    #[test]
    fn offsets_sort_mild_first() {
        let mut v = vec![MethodTag::MiOffset(-1.6), MethodTag::Cca, MethodTag::MiOffset(-0.8), MethodTag::MiOffset(-1.2)];
        v.sort_by(MethodTag::order);
        assert_eq!(v, vec![MethodTag::Cca, MethodTag::MiOffset(-0.8), MethodTag::MiOffset(-1.2), MethodTag::MiOffset(-1.6)]);
    }
}
