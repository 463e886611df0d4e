use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{NrbaError, Result};
use crate::glm::TreeConfig;
use crate::panel::{PanelDataset, Role, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    Logistic,
    Multinomial,
    Ordinal,
    /// Donor drawn from the target's leaf of a regression tree.
    Tree,
    /// Predictive mean matching.
    Pmm,
    /// Bayesian linear regression draw.
    Normal,
}

impl ImputeMethod {
    fn fits(self, kind: &VarKind) -> bool {
        match self {
            ImputeMethod::Logistic => *kind == VarKind::Binary,
            ImputeMethod::Multinomial => kind.is_categorical() || *kind == VarKind::Binary,
            ImputeMethod::Ordinal => matches!(kind, VarKind::Ordinal(_)),
            ImputeMethod::Tree | ImputeMethod::Pmm => true,
            ImputeMethod::Normal => *kind == VarKind::Numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputerSpec {
    /// Per-variable overrides of the default method.
    pub methods: BTreeMap<String, ImputeMethod>,
    /// Donor count for predictive mean matching.
    pub pmm_k: usize,
    /// Chained-equation passes within each wave.
    pub iterations: usize,
    pub include_base_weight: bool,
    pub tree: TreeConfig,
    /// Grouping variable for the offset residual SDs; defaults to the
    /// first nominal time-invariant variable.
    pub offset_group: Option<String>,
}

impl Default for ImputerSpec {
    fn default() -> Self {
        Self {
            methods: BTreeMap::new(),
            pmm_k: 5,
            iterations: 15,
            include_base_weight: true,
            tree: TreeConfig::default(),
            offset_group: None,
        }
    }
}

impl ImputerSpec {
    /// Method used for variable `var`: the override if any, otherwise by
    /// type (binary: logistic, nominal: multinomial, ordinal: ordinal,
    /// numeric covariate: tree, outcome: PMM).
    pub fn method_for(&self, data: &PanelDataset, var: usize) -> ImputeMethod {
        if let Some(m) = self.methods.get(data.name(var)) {
            return *m;
        }
        match (data.kind(var), data.role(var)) {
            (VarKind::Binary, _) => ImputeMethod::Logistic,
            (VarKind::Nominal(_), _) => ImputeMethod::Multinomial,
            (VarKind::Ordinal(_), _) => ImputeMethod::Ordinal,
            (VarKind::Numeric, Role::Outcome) => ImputeMethod::Pmm,
            (VarKind::Numeric, _) => ImputeMethod::Tree,
        }
    }

    pub fn validate(&self, data: &PanelDataset) -> Result<()> {
        if self.pmm_k == 0 {
            return Err(NrbaError::Config("pmm_k must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(NrbaError::Config("iterations must be at least 1".into()));
        }
        for (name, m) in &self.methods {
            let var = data.var(name).map_err(|e| NrbaError::Config(e.to_string()))?;
            if data.role(var).is_design() {
                return Err(NrbaError::Config(format!("`{name}` is a design variable and is never imputed")));
            }
            if !m.fits(data.kind(var)) {
                return Err(NrbaError::Config(format!("method {m:?} does not fit the type of `{name}`")));
            }
        }
        if let Some(g) = &self.offset_group {
            let var = data.var(g).map_err(|e| NrbaError::Config(e.to_string()))?;
            if !matches!(data.kind(var), VarKind::Nominal(_)) || data.role(var) != Role::TimeInvariant {
                return Err(NrbaError::Config(format!("offset group `{g}` must be a nominal time-invariant variable")));
            }
        }
        Ok(())
    }

    pub(crate) fn group_var(&self, data: &PanelDataset) -> Option<usize> {
        match &self.offset_group {
            Some(g) => data.var(g).ok(),
            None => (0..data.schema().variables.len())
                .find(|&v| data.role(v) == Role::TimeInvariant && matches!(data.kind(v), VarKind::Nominal(_))),
        }
    }
}
