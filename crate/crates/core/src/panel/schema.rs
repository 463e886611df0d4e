use serde::{Deserialize, Serialize};

use crate::error::{NrbaError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Numeric,
    Binary,
    Nominal(Vec<String>),
    Ordinal(Vec<String>),
}

impl VarKind {
    pub fn levels(&self) -> Option<&[String]> {
        match self {
            VarKind::Nominal(l) | VarKind::Ordinal(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.levels().is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Baseline / time-invariant covariate (Z).
    TimeInvariant,
    /// Covariate measured at every wave (X_t).
    TimeVarying,
    /// The survey outcome (Y_t); its observedness defines wave response.
    Outcome,
    ClusterId,
    BaseWeight,
}

impl Role {
    pub fn is_wave_specific(self) -> bool {
        matches!(self, Role::TimeVarying | Role::Outcome)
    }

    pub fn is_design(self) -> bool {
        matches!(self, Role::ClusterId | Role::BaseWeight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: VarKind,
    pub role: Role,
}

fn default_kind() -> VarKind {
    VarKind::Numeric
}

impl VariableSpec {
    pub fn new(name: &str, kind: VarKind, role: Role) -> Self {
        Self { name: name.to_string(), kind, role }
    }
}

/// Column layout of a wide panel file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    /// Name of the unit identifier column.
    #[serde(default = "default_id")]
    pub id: String,
    /// Number of follow-up waves `T`; waves run `0..=T`.
    pub waves: usize,
    /// Cell strings read as missing.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    pub variables: Vec<VariableSpec>,
}

fn default_id() -> String {
    "id".to_string()
}

fn default_missing() -> Vec<String> {
    vec![String::new()]
}

impl Schema {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Schema = serde_json::from_str(text).map_err(|e| NrbaError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NrbaError::Schema(format!("cannot read schema {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.waves < 1 {
            return Err(NrbaError::Schema("at least one follow-up wave is required".into()));
        }
        let mut names = std::collections::HashSet::new();
        names.insert(self.id.as_str());
        for v in &self.variables {
            if v.name.is_empty() || v.name.contains(',') {
                return Err(NrbaError::Schema(format!("invalid variable name `{}`", v.name)));
            }
            if !names.insert(v.name.as_str()) {
                return Err(NrbaError::Schema(format!("duplicate variable `{}`", v.name)));
            }
            if let Some(levels) = v.kind.levels() {
                if levels.is_empty() {
                    return Err(NrbaError::Schema(format!("variable `{}` has no levels", v.name)));
                }
                let mut seen = std::collections::HashSet::new();
                for l in levels {
                    if !seen.insert(l) {
                        return Err(NrbaError::Schema(format!("variable `{}` repeats level `{l}`", v.name)));
                    }
                    if self.missing.contains(l) {
                        return Err(NrbaError::Schema(format!(
                            "level `{l}` of `{}` collides with a missing sentinel",
                            v.name
                        )));
                    }
                }
            }
        }
        for (role, what) in [(Role::ClusterId, "cluster-id"), (Role::BaseWeight, "base-weight"), (Role::Outcome, "outcome")] {
            let count = self.variables.iter().filter(|v| v.role == role).count();
            if count != 1 {
                return Err(NrbaError::Schema(format!("exactly one {what} variable required, found {count}")));
            }
        }
        let bw = &self.variables[self.index_of_role(Role::BaseWeight)];
        if bw.kind != VarKind::Numeric {
            return Err(NrbaError::Schema("base weight must be numeric".into()));
        }
        let y = &self.variables[self.index_of_role(Role::Outcome)];
        if y.kind != VarKind::Numeric {
            return Err(NrbaError::Schema("outcome must be numeric".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub(crate) fn index_of_role(&self, role: Role) -> usize {
        self.variables.iter().position(|v| v.role == role).expect("validated schema")
    }

    /// CSV column name of a variable at a wave.
    pub fn column_name(&self, var: usize, wave: usize) -> String {
        let v = &self.variables[var];
        if v.role.is_wave_specific() {
            format!("{}_w{wave}", v.name)
        } else {
            v.name.clone()
        }
    }

    /// All CSV columns in canonical order.
    pub fn csv_columns(&self) -> Vec<String> {
        let mut cols = vec![self.id.clone()];
        for (i, v) in self.variables.iter().enumerate() {
            if v.role.is_wave_specific() {
                cols.extend((0..=self.waves).map(|t| self.column_name(i, t)));
            } else {
                cols.push(v.name.clone());
            }
        }
        cols
    }
}
