//! Wave-by-wave multiple imputation for monotone dropout.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chained::{item_impute_with, with_base_weight};
use super::draw::{designs, draw_variable};
use super::spec::ImputerSpec;
use crate::error::{NrbaError, Result};
use crate::glm::{fit_glm, Family};
use crate::panel::{load_panel, PanelDataset, Role, Schema, VarRef};
use crate::rng::{domain, SeedPath};
use crate::stats::sample_sd;

/// Groups with fewer respondents than this use the pooled residual SD.
pub const MIN_GROUP_SIZE: usize = 10;

/// Residual SD used for the offset in one copy, wave and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaRecord {
    pub copy: usize,
    pub wave: usize,
    pub group: String,
    pub respondents: usize,
    pub sd: f64,
    pub pooled_fallback: bool,
}

/// Everything needed to replay an imputation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationManifest {
    pub seed: u64,
    pub m: usize,
    pub iterations: usize,
    /// `k_t` for waves `1..=T`.
    pub offsets: Vec<f64>,
    pub group: Option<String>,
    pub spec: ImputerSpec,
    pub sigma: Vec<SigmaRecord>,
    pub files: Vec<String>,
}

impl ImputationManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: ImputationManifest =
            serde_json::from_str(text).map_err(|e| NrbaError::Config(format!("imputation manifest: {e}")))?;
        if m.m == 0 || m.files.len() != m.m {
            return Err(NrbaError::Config("imputation manifest lists the wrong number of files".into()));
        }
        if m.offsets.iter().any(|k| !k.is_finite()) {
            return Err(NrbaError::Config("imputation manifest has non-finite offsets".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub copies: Vec<PanelDataset>,
    pub offsets: Vec<f64>,
    pub sigma: Vec<SigmaRecord>,
    pub seed: u64,
    pub spec: ImputerSpec,
    pub group: Option<String>,
}

impl ImputationSet {
    pub fn m(&self) -> usize {
        self.copies.len()
    }

    pub fn manifest(&self) -> ImputationManifest {
        ImputationManifest {
            seed: self.seed,
            m: self.m(),
            iterations: self.spec.iterations,
            offsets: self.offsets.clone(),
            group: self.group.clone(),
            spec: self.spec.clone(),
            sigma: self.sigma.clone(),
            files: (1..=self.m()).map(|i| format!("imputed_{i}.csv")).collect(),
        }
    }

    /// Read a directory written by [`ImputationSet::write_dir`].
    pub fn read_dir(dir: &Path, schema: &Schema) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| NrbaError::Io(e).context(format!("reading {}", path.display())))?;
        let manifest = ImputationManifest::from_json(&text)?;
        let copies = manifest
            .files
            .iter()
            .map(|f| load_panel(&dir.join(f), schema))
            .collect::<Result<Vec<_>>>()?;
        Ok(ImputationSet {
            copies,
            offsets: manifest.offsets,
            sigma: manifest.sigma,
            seed: manifest.seed,
            spec: manifest.spec,
            group: manifest.group,
        })
    }

    /// Write `imputed_<i>.csv` for each copy and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for (copy, file) in self.copies.iter().zip(&manifest.files) {
            copy.write_csv(std::fs::File::create(dir.join(file))?)?;
        }
        let mut f = std::fs::File::create(dir.join("manifest.json"))?;
        f.write_all(serde_json::to_string_pretty(&manifest).expect("manifest serializes").as_bytes())?;
        Ok(())
    }
}

/// `draw + k * sigma`.
pub fn apply_offset(draw: f64, k: f64, sigma: f64) -> f64 {
    if k == 0.0 {
        draw
    } else {
        draw + k * sigma
    }
}

/// Multiply impute the waves after each unit's dropout, in wave order.
///
/// `offsets` holds `k_t` for waves `1..=T` (empty means all zero). At a
/// unit's dropout wave the outcome draw is shifted by `k_t` times the
/// residual SD of its group; later waves are imputed conditional on the
/// shifted value.
pub fn sequential_mi(data: &PanelDataset, spec: &ImputerSpec, m: usize, offsets: &[f64], seed: u64) -> Result<ImputationSet> {
    spec.validate(data)?;
    if m == 0 {
        return Err(NrbaError::Config("m must be at least 1".into()));
    }
    if !data.is_monotone() {
        return Err(NrbaError::Data("sequential imputation needs a monotone response pattern; run monotonize first".into()));
    }
    let offsets = if offsets.is_empty() { vec![0.0; data.waves()] } else { offsets.to_vec() };
    if offsets.len() != data.waves() {
        return Err(NrbaError::Config(format!("expected {} offsets, got {}", data.waves(), offsets.len())));
    }
    if offsets.iter().any(|k| !k.is_finite()) {
        return Err(NrbaError::Config("offsets must be finite".into()));
    }
    let root = SeedPath::new(seed).child(domain::IMPUTE);
    let results: Vec<Result<(PanelDataset, Vec<SigmaRecord>)>> = (0..m)
        .into_par_iter()
        .map(|c| impute_copy(data, spec, &offsets, c, root.child(c as u64)))
        .collect();
    let mut copies = Vec::with_capacity(m);
    let mut sigma = Vec::new();
    for r in results {
        let (d, s) = r?;
        copies.push(d);
        sigma.extend(s);
    }
    let group = spec.group_var(data).map(|g| data.name(g).to_string());
    Ok(ImputationSet { copies, offsets, sigma, seed, spec: spec.clone(), group })
}

fn impute_copy(
    data: &PanelDataset,
    spec: &ImputerSpec,
    offsets: &[f64],
    copy: usize,
    path: SeedPath,
) -> Result<(PanelDataset, Vec<SigmaRecord>)> {
    let mut work = item_impute_with(data, spec, path.child(domain::ITEM_IMPUTE))?;
    let mut sigma = Vec::new();
    let dropout: Vec<Option<usize>> = (0..data.n()).map(|u| data.dropout_wave(u)).collect();
    let wave_vars: Vec<usize> = (0..data.schema().variables.len())
        .filter(|&v| data.role(v) == Role::TimeVarying)
        .chain(std::iter::once(data.outcome_var()))
        .collect();
    let group_var = spec.group_var(data);
    for t in 1..=data.waves() {
        let resp = data.respondents(t);
        let targets: Vec<usize> = (0..data.n()).filter(|&u| !data.responded(u, t)).collect();
        if targets.is_empty() {
            continue;
        }
        if resp.is_empty() {
            return Err(NrbaError::Data(format!("no respondents at wave {t} to impute from")));
        }
        let mut refs = data.history_refs(t - 1);
        for &var in &wave_vars {
            let r = VarRef { var, wave: t };
            let name = data.schema().column_name(var, t);
            let ctx = |e: NrbaError| e.context(format!("wave {t}, `{name}`"));
            let train = with_base_weight(&work, work.frame(&refs, &resp)?, &resp, spec)?;
            let target = with_base_weight(&work, work.frame(&refs, &targets)?, &targets, spec)?;
            let y: Vec<f64> = resp.iter().map(|&u| work.get(r, u)).collect();
            let mut rng = path.child(t as u64).child(var as u64).rng();
            let mut draws =
                draw_variable(&name, spec.method_for(data, var), &train, &y, &target, spec, &mut rng).map_err(ctx)?;
            let k = offsets[t - 1];
            if var == data.outcome_var() && k != 0.0 {
                let sds = group_sds(data, &train, &y, &resp, group_var, copy, t).map_err(ctx)?;
                for (i, &u) in targets.iter().enumerate() {
                    if dropout[u] == Some(t) {
                        let g = group_var.map_or(0, |g| data.get(VarRef { var: g, wave: 0 }, u) as usize);
                        let s = sds.iter().find(|s| s.0 == g).map_or(sds[0].1, |s| s.1);
                        draws[i] = apply_offset(draws[i], k, s);
                    }
                }
                sigma.extend(sds.into_iter().map(|(_, _, rec)| rec));
            }
            for (&u, v) in targets.iter().zip(draws) {
                work.column_mut(r)[u] = v;
            }
            refs.push(r);
        }
    }
    Ok((work, sigma))
}

/// Residual SD of the respondent regression within each group; index 0
/// of the result is the pooled value when there is no grouping variable.
fn group_sds(
    data: &PanelDataset,
    train: &crate::frame::Frame,
    y: &[f64],
    resp: &[usize],
    group_var: Option<usize>,
    copy: usize,
    wave: usize,
) -> Result<Vec<(usize, f64, SigmaRecord)>> {
    let d = designs(train, train)?;
    let fit = fit_glm(&d.train, y, Family::Gaussian, None)?;
    let fitted = &d.train.x * &fit.params;
    let resid: Vec<f64> = y.iter().zip(fitted.iter()).map(|(y, f)| y - f).collect();
    let pooled = sample_sd(&resid);
    let Some(g) = group_var else {
        return Ok(vec![(
            0,
            pooled,
            SigmaRecord { copy, wave, group: "all".into(), respondents: resid.len(), sd: pooled, pooled_fallback: false },
        )]);
    };
    let levels = data.kind(g).levels().expect("nominal group").to_vec();
    let codes: Vec<usize> = resp.iter().map(|&u| data.get(VarRef { var: g, wave: 0 }, u) as usize).collect();
    let mut out = Vec::new();
    for (level, label) in levels.iter().enumerate() {
        let r: Vec<f64> = resid.iter().zip(&codes).filter(|(_, &c)| c == level).map(|(r, _)| *r).collect();
        let fallback = r.len() < MIN_GROUP_SIZE;
        if fallback {
            log::warn!(
                "wave {wave}: group `{label}` has {} respondents; offset uses the pooled residual SD",
                r.len()
            );
        }
        let sd = if fallback { pooled } else { sample_sd(&r) };
        out.push((
            level,
            sd,
            SigmaRecord { copy, wave, group: label.clone(), respondents: r.len(), sd, pooled_fallback: fallback },
        ));
    }
    Ok(out)
}
