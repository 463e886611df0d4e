use std::collections::HashSet;
use std::io::Write;

use super::schema::{Role, Schema, VarKind};
use crate::error::{NrbaError, Result};
use crate::frame::{Column, Frame};

/// A variable at a wave. The wave is ignored for time-invariant variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarRef {
    pub var: usize,
    pub wave: usize,
}

/// Wide-format longitudinal table: units x waves x variables.
///
/// Cells are stored as `f64` with `NaN` for missing. Binary variables hold
/// 0/1 and categorical variables hold level codes. Wave response `R_it` is
/// defined as observedness of the outcome at wave `t`.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    schema: Schema,
    unit_ids: Vec<String>,
    clusters: Vec<String>,
    base_weights: Vec<f64>,
    /// `[var][slot][unit]`; one slot for time-invariant variables, `T + 1`
    /// for wave-specific ones, none for design variables.
    values: Vec<Vec<Vec<f64>>>,
    excluded: Vec<String>,
}

impl PanelDataset {
    /// Assemble and validate a dataset. Units missing the baseline outcome
    /// are dropped and listed in [`PanelDataset::excluded_units`].
    pub fn from_parts(
        schema: Schema,
        unit_ids: Vec<String>,
        clusters: Vec<String>,
        base_weights: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        schema.validate()?;
        let n = unit_ids.len();
        if clusters.len() != n || base_weights.len() != n {
            return Err(NrbaError::Data("design columns do not match unit count".into()));
        }
        if values.len() != schema.variables.len() {
            return Err(NrbaError::Data("value table does not match schema".into()));
        }
        for (i, v) in schema.variables.iter().enumerate() {
            let slots = slot_count(&schema, v.role);
            if values[i].len() != slots || values[i].iter().any(|c| c.len() != n) {
                return Err(NrbaError::Data(format!("value table for `{}` has the wrong shape", v.name)));
            }
        }
        let mut seen = HashSet::new();
        for id in &unit_ids {
            if !seen.insert(id) {
                return Err(NrbaError::Data(format!("duplicate unit id `{id}`")));
            }
        }
        if let Some(w) = base_weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(NrbaError::Data(format!("base weights must be strictly positive, found {w}")));
        }
        let mut ds = PanelDataset { schema, unit_ids, clusters, base_weights, values, excluded: Vec::new() };
        let y = ds.outcome_var();
        let keep: Vec<usize> = (0..n).filter(|&u| !ds.values[y][0][u].is_nan()).collect();
        if keep.len() < n {
            let dropped: Vec<String> =
                (0..n).filter(|u| ds.values[y][0][*u].is_nan()).map(|u| ds.unit_ids[u].clone()).collect();
            log::warn!("excluded {} units without a baseline outcome", dropped.len());
            ds = ds.subset(&keep);
            ds.excluded = dropped;
        }
        if ds.n() == 0 {
            return Err(NrbaError::Data("no units with an observed baseline outcome".into()));
        }
        Ok(ds)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.unit_ids.len()
    }

    /// Number of follow-up waves `T`.
    pub fn waves(&self) -> usize {
        self.schema.waves
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn clusters(&self) -> &[String] {
        &self.clusters
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    /// Units dropped at construction for lacking the baseline outcome.
    pub fn excluded_units(&self) -> &[String] {
        &self.excluded
    }

    pub fn var(&self, name: &str) -> Result<usize> {
        self.schema
            .index_of(name)
            .ok_or_else(|| NrbaError::Data(format!("unknown variable `{name}`")))
    }

    pub fn kind(&self, var: usize) -> &VarKind {
        &self.schema.variables[var].kind
    }

    pub fn role(&self, var: usize) -> Role {
        self.schema.variables[var].role
    }

    pub fn name(&self, var: usize) -> &str {
        &self.schema.variables[var].name
    }

    pub fn outcome_var(&self) -> usize {
        self.schema.index_of_role(Role::Outcome)
    }

    /// Indices of variables with the given role, in declaration order.
    pub fn vars_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.schema.variables.len()).filter(|&i| self.role(i) == role).collect()
    }

    fn slot(&self, r: VarRef) -> usize {
        if self.role(r.var).is_wave_specific() {
            r.wave
        } else {
            0
        }
    }

    pub fn column(&self, r: VarRef) -> &[f64] {
        &self.values[r.var][self.slot(r)]
    }

    pub fn column_mut(&mut self, r: VarRef) -> &mut Vec<f64> {
        let s = self.slot(r);
        &mut self.values[r.var][s]
    }

    pub fn get(&self, r: VarRef, unit: usize) -> f64 {
        self.column(r)[unit]
    }

    pub fn outcome(&self, wave: usize) -> &[f64] {
        &self.values[self.outcome_var()][wave]
    }

    pub fn responded(&self, unit: usize, wave: usize) -> bool {
        !self.outcome(wave)[unit].is_nan()
    }

    /// `R[unit][wave]`.
    pub fn response_matrix(&self) -> Vec<Vec<bool>> {
        (0..self.n())
            .map(|u| (0..=self.waves()).map(|t| self.responded(u, t)).collect())
            .collect()
    }

    /// Units observed at wave `t`.
    pub fn respondents(&self, wave: usize) -> Vec<usize> {
        (0..self.n()).filter(|&u| self.responded(u, wave)).collect()
    }

    /// Units observed at every wave.
    pub fn complete_cases(&self) -> Vec<usize> {
        (0..self.n()).filter(|&u| (0..=self.waves()).all(|t| self.responded(u, t))).collect()
    }

    pub fn is_monotone(&self) -> bool {
        (0..self.n()).all(|u| {
            let mut dropped = false;
            for t in 0..=self.waves() {
                let r = self.responded(u, t);
                if dropped && r {
                    return false;
                }
                dropped |= !r;
            }
            true
        })
    }

    /// First wave with a missing outcome, if any.
    pub fn dropout_wave(&self, unit: usize) -> Option<usize> {
        (0..=self.waves()).find(|&t| !self.responded(unit, t))
    }

    /// Time-invariant variables, then per wave `0..=through` the time-varying
    /// covariates and the outcome: everything known once wave `through` is
    /// observed. Design variables are excluded.
    pub fn history_refs(&self, through: usize) -> Vec<VarRef> {
        let vars = &self.schema.variables;
        let mut refs: Vec<VarRef> = (0..vars.len())
            .filter(|&v| vars[v].role == Role::TimeInvariant)
            .map(|var| VarRef { var, wave: 0 })
            .collect();
        for wave in 0..=through {
            for (var, v) in vars.iter().enumerate() {
                if v.role == Role::TimeVarying {
                    refs.push(VarRef { var, wave });
                }
            }
            refs.push(VarRef { var: self.outcome_var(), wave });
        }
        refs
    }

    /// Units in the given order (duplicates allowed; duplicated ids get a
    /// `#k` suffix so ids stay unique).
    pub fn subset(&self, units: &[usize]) -> PanelDataset {
        let mut counts = std::collections::HashMap::new();
        let unit_ids = units
            .iter()
            .map(|&u| {
                let c = counts.entry(u).or_insert(0usize);
                *c += 1;
                if *c == 1 {
                    self.unit_ids[u].clone()
                } else {
                    format!("{}#{}", self.unit_ids[u], c)
                }
            })
            .collect();
        PanelDataset {
            schema: self.schema.clone(),
            unit_ids,
            clusters: units.iter().map(|&u| self.clusters[u].clone()).collect(),
            base_weights: units.iter().map(|&u| self.base_weights[u]).collect(),
            values: self
                .values
                .iter()
                .map(|slots| slots.iter().map(|col| units.iter().map(|&u| col[u]).collect()).collect())
                .collect(),
            excluded: self.excluded.clone(),
        }
    }

    /// Model frame over `units` for the given variable references; columns
    /// are named `name` or `name_w<t>`. Fails on missing cells.
    pub fn frame(&self, refs: &[VarRef], units: &[usize]) -> Result<Frame> {
        let mut frame = Frame::new();
        for &r in refs {
            let name = self.schema.column_name(r.var, r.wave);
            let col = self.column(r);
            let vals: Vec<f64> = units.iter().map(|&u| col[u]).collect();
            if let Some(pos) = vals.iter().position(|v| v.is_nan()) {
                return Err(NrbaError::Data(format!(
                    "`{name}` is missing for unit `{}`",
                    self.unit_ids[units[pos]]
                )));
            }
            let column = match self.kind(r.var) {
                VarKind::Numeric | VarKind::Binary => Column::Numeric(vals),
                VarKind::Nominal(l) | VarKind::Ordinal(l) => {
                    Column::Categorical { levels: l.clone(), codes: vals.iter().map(|&v| v as usize).collect() }
                }
            };
            frame.push(name, column)?;
        }
        Ok(frame)
    }

    /// Base weights as a numeric frame column.
    pub fn base_weight_column(&self, units: &[usize]) -> Column {
        Column::Numeric(units.iter().map(|&u| self.base_weights[u]).collect())
    }

    pub fn format_cell(&self, var: usize, v: f64) -> String {
        if v.is_nan() {
            return self.schema.missing.first().cloned().unwrap_or_default();
        }
        match self.kind(var) {
            VarKind::Numeric => format!("{v}"),
            VarKind::Binary => format!("{}", v as i64),
            VarKind::Nominal(l) | VarKind::Ordinal(l) => l[v as usize].clone(),
        }
    }

    /// Write the wide CSV layout read by [`super::load_panel`].
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.schema.csv_columns()).map_err(csv_io)?;
        for u in 0..self.n() {
            let mut rec = vec![self.unit_ids[u].clone()];
            for (i, v) in self.schema.variables.iter().enumerate() {
                match v.role {
                    Role::ClusterId => rec.push(self.clusters[u].clone()),
                    Role::BaseWeight => rec.push(format!("{}", self.base_weights[u])),
                    r if r.is_wave_specific() => {
                        for t in 0..=self.waves() {
                            rec.push(self.format_cell(i, self.values[i][t][u]));
                        }
                    }
                    _ => rec.push(self.format_cell(i, self.values[i][0][u])),
                }
            }
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

/// Cell-wise equality in which two missing cells compare equal.
impl PartialEq for PanelDataset {
    fn eq(&self, other: &Self) -> bool {
        let same = |a: &Vec<Vec<Vec<f64>>>, b: &Vec<Vec<Vec<f64>>>| {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.len() == y.len()
                        && x.iter().zip(y).all(|(c, d)| {
                            c.len() == d.len() && c.iter().zip(d).all(|(u, v)| u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan()))
                        })
                })
        };
        self.schema == other.schema
            && self.unit_ids == other.unit_ids
            && self.clusters == other.clusters
            && self.base_weights == other.base_weights
            && self.excluded == other.excluded
            && same(&self.values, &other.values)
    }
}

pub(crate) fn slot_count(schema: &Schema, role: Role) -> usize {
    match role {
        Role::ClusterId | Role::BaseWeight => 0,
        Role::TimeInvariant => 1,
        Role::TimeVarying | Role::Outcome => schema.waves + 1,
    }
}

pub(crate) fn csv_io(e: csv::Error) -> NrbaError {
    NrbaError::Io(std::io::Error::other(e.to_string()))
}
