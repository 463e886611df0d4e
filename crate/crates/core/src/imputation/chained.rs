//! Item nonresponse within observed waves.

use rand::Rng;

use super::draw::{draw_variable, pmm_draw};
use super::spec::ImputerSpec;
use crate::error::{NrbaError, Result};
use crate::frame::Frame;
use crate::panel::{PanelDataset, Role, VarRef};
use crate::rng::{domain, SeedPath};
use crate::weighting::BASE_WEIGHT_COLUMN;

pub(crate) fn with_base_weight(data: &PanelDataset, mut frame: Frame, units: &[usize], spec: &ImputerSpec) -> Result<Frame> {
    if spec.include_base_weight {
        frame.push(BASE_WEIGHT_COLUMN, data.base_weight_column(units))?;
    }
    Ok(frame)
}

/// Variables measured at `wave` that can carry item gaps.
fn wave_block(data: &PanelDataset, wave: usize) -> Vec<VarRef> {
    (0..data.schema().variables.len())
        .filter(|&v| match data.role(v) {
            Role::TimeInvariant => wave == 0,
            Role::TimeVarying => true,
            _ => false,
        })
        .map(|var| VarRef { var, wave })
        .collect()
}

/// Fill item gaps in the waves each unit responded to, by chained
/// equations. Returns one completed copy.
pub fn impute_item_nonresponse(data: &PanelDataset, spec: &ImputerSpec, seed: u64) -> Result<PanelDataset> {
    item_impute_with(data, spec, SeedPath::new(seed).child(domain::ITEM_IMPUTE))
}

pub(crate) fn has_item_gaps(data: &PanelDataset) -> bool {
    (0..=data.waves()).any(|t| {
        let units = data.respondents(t);
        wave_block(data, t).iter().any(|&r| units.iter().any(|&u| data.get(r, u).is_nan()))
    })
}

pub(crate) fn item_impute_with(data: &PanelDataset, spec: &ImputerSpec, path: SeedPath) -> Result<PanelDataset> {
    spec.validate(data)?;
    if !has_item_gaps(data) {
        return Ok(data.clone());
    }
    if !data.is_monotone() {
        return Err(NrbaError::Data("item imputation needs a monotone response pattern; run monotonize first".into()));
    }
    let mut work = data.clone();
    for wave in 0..=data.waves() {
        let units = data.respondents(wave);
        let block = wave_block(data, wave);
        let mut incomplete: Vec<(usize, VarRef, Vec<usize>)> = Vec::new();
        for &r in &block {
            let missing: Vec<usize> = units.iter().copied().filter(|&u| data.get(r, u).is_nan()).collect();
            if missing.len() == units.len() {
                return Err(NrbaError::Data(format!(
                    "`{}` is missing for every respondent",
                    data.schema().column_name(r.var, r.wave)
                )));
            }
            if !missing.is_empty() {
                incomplete.push((missing.len(), r, missing));
            }
        }
        if incomplete.is_empty() {
            continue;
        }
        // Ascending missingness; the sort is stable so ties keep declaration order.
        incomplete.sort_by_key(|(count, ..)| *count);
        let wave_path = path.child(wave as u64);
        let mut init_rng = wave_path.child(u64::MAX).rng();
        for (_, r, missing) in &incomplete {
            let observed: Vec<f64> = units.iter().map(|&u| data.get(*r, u)).filter(|v| !v.is_nan()).collect();
            for &u in missing {
                work.column_mut(*r)[u] = observed[init_rng.random_range(0..observed.len())];
            }
        }
        let history = if wave == 0 { Vec::new() } else { data.history_refs(wave - 1) };
        let passes = if incomplete.len() == 1 { 1 } else { spec.iterations };
        for pass in 0..passes {
            for (_, r, missing) in &incomplete {
                let mut refs = history.clone();
                refs.extend(block.iter().copied().filter(|b| b != r));
                refs.push(VarRef { var: data.outcome_var(), wave });
                let train_units: Vec<usize> = units.iter().copied().filter(|u| !missing.contains(u)).collect();
                let train = with_base_weight(&work, work.frame(&refs, &train_units)?, &train_units, spec)?;
                let target = with_base_weight(&work, work.frame(&refs, missing)?, missing, spec)?;
                let y: Vec<f64> = train_units.iter().map(|&u| work.get(*r, u)).collect();
                let method = spec.method_for(data, r.var);
                let mut rng = wave_path.child(pass as u64).child(r.var as u64).rng();
                let name = data.schema().column_name(r.var, r.wave);
                let draws = draw_variable(&name, method, &train, &y, &target, spec, &mut rng)
                    .map_err(|e| e.context(format!("imputing `{name}`")))?;
                for (&u, v) in missing.iter().zip(draws) {
                    work.column_mut(*r)[u] = v;
                }
            }
        }
    }
    Ok(work)
}

/// Fill outcomes missed at a wave the unit later returns from, by a single
/// predictive-mean-matching draw on the base weight and earlier outcomes.
/// Returns the filled data and the `(unit row, column)` cells filled.
pub fn fill_intermittent(data: &PanelDataset, seed: u64) -> Result<(PanelDataset, Vec<(usize, String)>)> {
    let spec = ImputerSpec::default();
    let mut work = data.clone();
    let mut cells = Vec::new();
    let y = data.outcome_var();
    let path = SeedPath::new(seed).child(domain::ITEM_IMPUTE).child(u64::MAX);
    for t in 1..data.waves() {
        let targets: Vec<usize> = (0..data.n())
            .filter(|&u| !work.responded(u, t) && ((t + 1)..=data.waves()).any(|s| data.responded(u, s)))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let train: Vec<usize> = (0..data.n())
            .filter(|&u| work.responded(u, t) && (0..t).all(|s| work.responded(u, s)))
            .collect();
        let refs: Vec<VarRef> = (0..t).map(|wave| VarRef { var: y, wave }).collect();
        let tf = with_base_weight(&work, work.frame(&refs, &train)?, &train, &spec)?;
        let gf = with_base_weight(&work, work.frame(&refs, &targets)?, &targets, &spec)?;
        let d = super::draw::designs(&tf, &gf)?;
        let obs: Vec<f64> = train.iter().map(|&u| work.get(VarRef { var: y, wave: t }, u)).collect();
        let fit = crate::glm::fit_glm(&d.train, &obs, crate::glm::Family::Gaussian, None)?;
        let donor = &d.train.x * &fit.params;
        let target = &d.target.x * &fit.params;
        let mut rng = path.child(t as u64).rng();
        let draws = pmm_draw(target.as_slice(), donor.as_slice(), &obs, spec.pmm_k, &mut rng)?;
        for (&u, v) in targets.iter().zip(draws) {
            work.column_mut(VarRef { var: y, wave: t })[u] = v;
            cells.push((u, data.schema().column_name(y, t)));
        }
    }
    Ok((work, cells))
}
