use serde::{Deserialize, Serialize};

use crate::error::{NrbaError, Result};

/// One fixed-effect term of an analysis model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Term {
    /// Raw numeric or binary variable: `x`.
    Numeric(String),
    /// Centered and scaled over the included rows: `std(x)`.
    Standardized(String),
    /// Square of the standardized variable: `std2(x)`.
    StandardizedSquared(String),
    /// Dummies for every non-reference level: `cat(x)`.
    Categorical(String),
    /// Dummies for waves `1..=T`: `wave`.
    Wave,
    /// Wave by categorical interaction dummies: `wave:x`.
    WaveBy(String),
}

impl Term {
    pub fn parse(s: &str) -> Result<Term> {
        let s = s.trim();
        let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')')).map(str::trim);
        let term = if s == "wave" {
            Term::Wave
        } else if let Some(v) = s.strip_prefix("wave:") {
            Term::WaveBy(v.trim().to_string())
        } else if let Some(v) = inner("std2(") {
            Term::StandardizedSquared(v.to_string())
        } else if let Some(v) = inner("std(") {
            Term::Standardized(v.to_string())
        } else if let Some(v) = inner("cat(") {
            Term::Categorical(v.to_string())
        } else {
            Term::Numeric(s.to_string())
        };
        match &term {
            Term::Numeric(v) | Term::Standardized(v) | Term::StandardizedSquared(v) | Term::Categorical(v) | Term::WaveBy(v)
                if v.is_empty() || !v.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.') =>
            {
                Err(NrbaError::Config(format!("cannot parse model term `{s}`")))
            }
            _ => Ok(term),
        }
    }

    pub fn variable(&self) -> Option<&str> {
        match self {
            Term::Wave => None,
            Term::Numeric(v) | Term::Standardized(v) | Term::StandardizedSquared(v) | Term::Categorical(v) | Term::WaveBy(v) => {
                Some(v)
            }
        }
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Term::Numeric(v) => write!(f, "{v}"),
            Term::Standardized(v) => write!(f, "std({v})"),
            Term::StandardizedSquared(v) => write!(f, "std2({v})"),
            Term::Categorical(v) => write!(f, "cat({v})"),
            Term::Wave => write!(f, "wave"),
            Term::WaveBy(v) => write!(f, "wave:{v}"),
        }
    }
}

impl TryFrom<String> for Term {
    type Error = NrbaError;
    fn try_from(s: String) -> Result<Term> {
        Term::parse(&s)
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// Fixed-effect specification with an intercept. Interactions must
/// reference a categorical main effect and the wave term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisFormula {
    pub terms: Vec<Term>,
}

impl AnalysisFormula {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let f = AnalysisFormula { terms };
        f.validate()?;
        Ok(f)
    }

    pub fn parse(terms: &[&str]) -> Result<Self> {
        Self::new(terms.iter().map(|t| Term::parse(t)).collect::<Result<_>>()?)
    }

    /// Wave means only.
    pub fn wave_means() -> Self {
        AnalysisFormula { terms: vec![Term::Wave] }
    }

    /// Growth model with age and its square, sex, group and poverty
    /// dummies, two further covariates, wave dummies and wave by group.
    pub fn growth(age: &str, sex: &str, group: &str, pov: &str, extra: &[&str]) -> Self {
        let mut terms = vec![
            Term::Standardized(age.into()),
            Term::StandardizedSquared(age.into()),
            Term::Numeric(sex.into()),
            Term::Categorical(group.into()),
            Term::Categorical(pov.into()),
        ];
        terms.extend(extra.iter().map(|e| Term::Numeric((*e).into())));
        terms.push(Term::Wave);
        terms.push(Term::WaveBy(group.into()));
        AnalysisFormula { terms }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(NrbaError::Config(format!("term `{t}` repeated")));
            }
            if let Term::WaveBy(v) = t {
                if !self.terms.contains(&Term::Wave) || !self.terms.contains(&Term::Categorical(v.clone())) {
                    return Err(NrbaError::Config(format!("interaction `{t}` needs main effects `wave` and `cat({v})`")));
                }
            }
        }
        Ok(())
    }
}
