use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::propensity::{fit_propensity, propensity_frame, PropensityFit, PropensitySpec};
use crate::error::{NrbaError, Result};
use crate::panel::dataset::csv_io;
use crate::panel::PanelDataset;
use crate::stats::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "CCA-attr")]
    CcaAttr,
    #[serde(rename = "ACA-attr")]
    AcaAttr,
    #[serde(rename = "ACA-seq-attr")]
    AcaSeqAttr,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Provenance::Base => "base",
            Provenance::CcaAttr => "CCA-attr",
            Provenance::AcaAttr => "ACA-attr",
            Provenance::AcaSeqAttr => "ACA-seq-attr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Provenance::Base, Provenance::CcaAttr, Provenance::AcaAttr, Provenance::AcaSeqAttr]
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| NrbaError::Data(format!("unknown weight provenance `{s}`")))
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrimRecord {
    pub quantile: f64,
    pub threshold: f64,
    pub trimmed: usize,
}

/// Per-unit weights for one wave.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSet {
    pub wave: usize,
    pub provenance: Provenance,
    /// Dataset row indices of the weighted units.
    pub units: Vec<usize>,
    pub unit_ids: Vec<String>,
    /// Final (scaled, possibly trimmed) weights.
    pub weights: Vec<f64>,
    /// Weights before scaling.
    pub unscaled: Vec<f64>,
    /// Clipped propensity used for this wave's adjustment factor
    /// (the conditional propensity for sequential weights; 1 for base).
    pub propensity: Vec<f64>,
    pub target_sum: f64,
    pub trimming: Option<TrimRecord>,
    pub bounds: [f64; 2],
    /// Propensities moved by clipping (over the whole fitting set).
    pub clipped: usize,
    pub auc: Option<f64>,
    pub terms: Vec<String>,
}

impl WeightSet {
    /// A set built from raw weights with the given target sum.
    pub fn from_weights(wave: usize, provenance: Provenance, unit_ids: Vec<String>, raw: Vec<f64>, target_sum: f64) -> Result<Self> {
        if raw.len() != unit_ids.len() {
            return Err(NrbaError::Data("weights and ids differ in length".into()));
        }
        if raw.is_empty() {
            return Err(NrbaError::Data("empty respondent set".into()));
        }
        if let Some(w) = raw.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(NrbaError::Data(format!("weights must be strictly positive, found {w}")));
        }
        let s: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w * target_sum / s).collect();
        Ok(WeightSet {
            wave,
            provenance,
            units: (0..raw.len()).collect(),
            unit_ids,
            weights,
            propensity: vec![1.0; raw.len()],
            unscaled: raw,
            target_sum,
            trimming: None,
            bounds: [0.0, 1.0],
            clipped: 0,
            auc: None,
            terms: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Label used in tables, e.g. `ACA-seq-attr-w3`.
    pub fn label(&self) -> String {
        match self.provenance {
            Provenance::Base => "Base-w".to_string(),
            Provenance::CcaAttr => "CCA-attr-w".to_string(),
            p => format!("{}-w{}", p.tag(), self.wave),
        }
    }

    /// Weight for dataset row `unit`, if weighted.
    pub fn weight_of(&self, unit: usize) -> Option<f64> {
        self.units.iter().position(|&u| u == unit).map(|i| self.weights[i])
    }
}

fn clip(p: f64, bounds: [f64; 2]) -> f64 {
    p.clamp(bounds[0], bounds[1])
}

fn assemble(
    data: &PanelDataset,
    wave: usize,
    provenance: Provenance,
    units: Vec<usize>,
    unscaled: Vec<f64>,
    propensity: Vec<f64>,
    fit: Option<&PropensityFit>,
    bounds: [f64; 2],
    clipped: usize,
) -> Result<WeightSet> {
    if units.is_empty() {
        return Err(NrbaError::Data(format!("empty respondent set at wave {wave}")));
    }
    let target_sum = units.len() as f64;
    let s: f64 = unscaled.iter().sum();
    if clipped > 0 {
        log::warn!("{} wave {wave}: {clipped} propensities clipped to [{}, {}]", provenance.tag(), bounds[0], bounds[1]);
    }
    Ok(WeightSet {
        wave,
        provenance,
        unit_ids: units.iter().map(|&u| data.unit_ids()[u].clone()).collect(),
        weights: unscaled.iter().map(|w| w * target_sum / s).collect(),
        units,
        unscaled,
        propensity,
        target_sum,
        trimming: None,
        bounds,
        clipped,
        auc: fit.and_then(|f| f.auc),
        terms: fit.map(|f| f.terms.clone()).unwrap_or_default(),
    })
}

/// Base weights on the wave-`t` respondents (`cca` restricts to complete cases).
pub fn base_weight_set(data: &PanelDataset, wave: usize, cca: bool) -> Result<WeightSet> {
    let units = if cca { data.complete_cases() } else { data.respondents(wave) };
    let raw = units.iter().map(|&u| data.base_weights()[u]).collect();
    let ones = vec![1.0; units.len()];
    assemble(data, wave, Provenance::Base, units, raw, ones, None, [0.0, 1.0], 0)
}

/// Fit `indicator` on the baseline history over all units, and weight the
/// units with `indicator = 1` by base weight over clipped propensity.
fn baseline_adjusted(
    data: &PanelDataset,
    wave: usize,
    provenance: Provenance,
    indicator: Vec<bool>,
    spec: &PropensitySpec,
) -> Result<WeightSet> {
    spec.validate()?;
    let all: Vec<usize> = (0..data.n()).collect();
    let frame = propensity_frame(data, &data.history_refs(0), &all, spec)?;
    let y: Vec<f64> = indicator.iter().map(|&r| f64::from(u8::from(r))).collect();
    let fit = fit_propensity(&frame, &y, data.base_weights(), spec)
        .map_err(|e| e.context(format!("{} propensity model, wave {wave}", provenance.tag())))?;
    let clipped = fit.fitted.iter().filter(|&&p| fit.model.is_some() && clip(p, spec.bounds) != p).count();
    let units: Vec<usize> = all.iter().copied().filter(|&u| indicator[u]).collect();
    let prop: Vec<f64> = units
        .iter()
        .map(|&u| if fit.model.is_some() { clip(fit.fitted[u], spec.bounds) } else { 1.0 })
        .collect();
    let raw = units.iter().zip(&prop).map(|(&u, p)| data.base_weights()[u] / p).collect();
    assemble(data, wave, provenance, units, raw, prop, Some(&fit), spec.bounds, clipped)
}

/// Attrition weights for wave `t` from a propensity model on baseline
/// information (ACA-attr).
pub fn baseline_weights(data: &PanelDataset, wave: usize, spec: &PropensitySpec) -> Result<WeightSet> {
    if wave == 0 || wave > data.waves() {
        return Err(NrbaError::Config(format!("wave must lie in 1..={}, got {wave}", data.waves())));
    }
    let r = (0..data.n()).map(|u| data.responded(u, wave)).collect();
    baseline_adjusted(data, wave, Provenance::AcaAttr, r, spec)
}

/// Complete-case attrition weights: one model for responding at every
/// follow-up wave, on baseline information (CCA-attr).
pub fn cca_weights(data: &PanelDataset, spec: &PropensitySpec) -> Result<WeightSet> {
    let r = (0..data.n()).map(|u| (1..=data.waves()).all(|t| data.responded(u, t))).collect();
    baseline_adjusted(data, data.waves(), Provenance::CcaAttr, r, spec)
}

/// Sequential attrition weights for waves `1..=T` (ACA-seq-attr). The wave-
/// `t` model is fitted on the wave-`t-1` respondents with everything
/// observed through wave `t-1` as candidates; `specs` holds one spec per
/// wave or a single spec for all.
pub fn sequential_weights(data: &PanelDataset, specs: &[PropensitySpec]) -> Result<Vec<WeightSet>> {
    if !data.is_monotone() {
        return Err(NrbaError::Data(
            "sequential weights need a monotone response pattern; run monotonize first".into(),
        ));
    }
    if specs.is_empty() || (specs.len() != 1 && specs.len() != data.waves()) {
        return Err(NrbaError::Config(format!("expected 1 or {} propensity specs", data.waves())));
    }
    let mut current: Vec<f64> = data.base_weights().to_vec();
    let mut out = Vec::with_capacity(data.waves());
    for t in 1..=data.waves() {
        let spec = &specs[if specs.len() == 1 { 0 } else { t - 1 }];
        spec.validate()?;
        let at_risk = data.respondents(t - 1);
        let frame = propensity_frame(data, &data.history_refs(t - 1), &at_risk, spec)?;
        let y: Vec<f64> = at_risk.iter().map(|&u| f64::from(u8::from(data.responded(u, t)))).collect();
        let w: Vec<f64> = at_risk.iter().map(|&u| data.base_weights()[u]).collect();
        let fit = fit_propensity(&frame, &y, &w, spec)
            .map_err(|e| e.context(format!("ACA-seq-attr propensity model, wave {t}")))?;
        let fitted_model = fit.model.is_some();
        let clipped = fit.fitted.iter().filter(|&&p| fitted_model && clip(p, spec.bounds) != p).count();
        let mut next = vec![f64::NAN; data.n()];
        let mut units = Vec::new();
        let mut prop = Vec::new();
        for (i, &u) in at_risk.iter().enumerate() {
            if data.responded(u, t) {
                let p = if fitted_model { clip(fit.fitted[i], spec.bounds) } else { 1.0 };
                next[u] = current[u] / p;
                units.push(u);
                prop.push(p);
            }
        }
        let raw = units.iter().map(|&u| next[u]).collect();
        out.push(assemble(data, t, Provenance::AcaSeqAttr, units, raw, prop, Some(&fit), spec.bounds, clipped)?);
        current = next;
    }
    Ok(out)
}

/// Cap weights at their `q`-quantile (type 7), then rescale to the
/// original total.
pub fn trim_weights(w: &WeightSet, q: f64) -> Result<WeightSet> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(NrbaError::Config(format!("trimming quantile must lie in (0, 1], got {q}")));
    }
    let total: f64 = w.weights.iter().sum();
    let threshold = quantile(&w.weights, q);
    let trimmed = w.weights.iter().filter(|&&x| x > threshold).count();
    let mut out = w.clone();
    if trimmed > 0 {
        let capped: Vec<f64> = w.weights.iter().map(|&x| x.min(threshold)).collect();
        let s: f64 = capped.iter().sum();
        out.weights = capped.iter().map(|x| x * total / s).collect();
    }
    out.target_sum = total;
    out.trimming = Some(TrimRecord { quantile: q, threshold, trimmed });
    Ok(out)
}

/// One exported weight row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub unit_id: String,
    pub wave: usize,
    pub weight: f64,
    pub provenance: Provenance,
}

pub fn write_weights_csv<W: Write>(sets: &[WeightSet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unit_id", "wave", "weight", "provenance"]).map_err(csv_io)?;
    for s in sets {
        for (id, x) in s.unit_ids.iter().zip(&s.weights) {
            w.write_record([id.clone(), s.wave.to_string(), format!("{x}"), s.provenance.tag().to_string()])
                .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_weights_csv<R: Read>(input: R) -> Result<Vec<WeightRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| NrbaError::Parse { row: 1, column: String::new(), message: e.to_string() })?
        .clone();
    let expected = ["unit_id", "wave", "weight", "provenance"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(NrbaError::Parse { row: 1, column: String::new(), message: format!("expected header {}", expected.join(",")) });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| NrbaError::Parse { row, column: String::new(), message: e.to_string() })?;
        let perr = |column: &str, message: String| NrbaError::Parse { row, column: column.to_string(), message };
        let wave = rec[1].parse().map_err(|_| perr("wave", format!("cannot parse `{}`", &rec[1])))?;
        let weight: f64 = rec[2].parse().map_err(|_| perr("weight", format!("cannot parse `{}`", &rec[2])))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(perr("weight", format!("weight must be strictly positive, found {weight}")));
        }
        let provenance = Provenance::parse(&rec[3]).map_err(|e| perr("provenance", e.to_string()))?;
        out.push(WeightRecord { unit_id: rec[0].to_string(), wave, weight, provenance });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trimming_example() {
        let ids = (0..5).map(|i| i.to_string()).collect();
        let w = WeightSet::from_weights(1, Provenance::Base, ids, vec![1.0, 1.0, 1.0, 1.0, 10.0], 14.0).unwrap();
        let t = trim_weights(&w, 0.8).unwrap();
        let rec = t.trimming.as_ref().unwrap();
        assert!((rec.threshold - 2.8).abs() < 1e-12);
        assert_eq!(rec.trimmed, 1);
        let scale = 14.0 / 6.8;
        for (a, b) in t.weights.iter().zip([1.0, 1.0, 1.0, 1.0, 2.8]) {
            assert!((a - b * scale).abs() < 1e-12);
        }
        assert_eq!(trim_weights(&w, 1.0).unwrap().weights, w.weights);
    }

    #[test]
    fn provenance_tags_round_trip() {
        for p in [Provenance::Base, Provenance::CcaAttr, Provenance::AcaAttr, Provenance::AcaSeqAttr] {
            assert_eq!(Provenance::parse(p.tag()).unwrap(), p);
        }
        assert!(Provenance::parse("x").is_err());
    }
}
