use std::path::{Path, PathBuf};

use nrba::imputation::ImputerSpec;
use nrba::longit::{AnalysisFormula, MethodTag, Term, WorkingCorrelation};
use nrba::weighting::PropensitySpec;
use nrba::NrbaError;
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

pub const DEFAULT_OFFSETS: [f64; 3] = [-0.8, -1.2, -1.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneHandling {
    /// Mask every wave after a unit's first missed wave.
    #[default]
    Drop,
    /// Fill intermittent gaps by single imputation.
    Impute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// One spec for every wave, or one per follow-up wave.
    #[serde(default = "default_specs")]
    pub propensity: Vec<PropensitySpec>,
    /// Trim attrition weights at this quantile; `null` disables trimming.
    #[serde(default = "default_trim")]
    pub trim: Option<f64>,
}

fn default_specs() -> Vec<PropensitySpec> {
    vec![PropensitySpec::default()]
}

fn default_trim() -> Option<f64> {
    Some(0.95)
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self { propensity: default_specs(), trim: default_trim() }
    }
}

fn default_m() -> usize {
    5
}

fn default_power() -> f64 {
    1.0
}

/// Pipeline configuration. Relative paths resolve against the directory of
/// the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub methods: Vec<String>,
    /// Nominal variable for rates and subgroup means.
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub monotone: MonotoneHandling,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub imputer: ImputerSpec,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Sensitivity offsets `k`; defaults to -0.8, -1.2, -1.6.
    #[serde(default)]
    pub offsets: Option<Vec<f64>>,
    /// Cluster bootstrap replicates for weighted means (0 = off).
    #[serde(default)]
    pub bootstrap: usize,
    #[serde(default)]
    pub formula: Option<Vec<Term>>,
    #[serde(default)]
    pub working: WorkingCorrelation,
    #[serde(default = "default_power")]
    pub weight_power: f64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        Ok(serde_json::from_str(text).map_err(|e| NrbaError::Config(format!("config: {e}")))?)
    }

    /// Read, resolve paths and validate.
    pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NrbaError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.input = base.join(&cfg.input);
        cfg.schema = base.join(&cfg.schema);
        if let Some(s) = seed {
            cfg.seed = Some(s);
        }
        match out {
            Some(o) => cfg.out = Some(o.to_path_buf()),
            None => cfg.out = cfg.out.map(|o| base.join(o)),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let mut problems = Vec::new();
        for (what, p) in [("input", &self.input), ("schema", &self.schema)] {
            if !p.is_file() {
                problems.push(format!("{what} file {} does not exist", p.display()));
            }
        }
        if self.seed.is_none() {
            problems.push("seed is required (config `seed` or --seed)".into());
        }
        let mut tags = Vec::new();
        let mut unknown = Vec::new();
        for m in &self.methods {
            match MethodTag::parse(m) {
                Ok(t) => tags.push(t),
                Err(_) => unknown.push(format!("`{}`", m.trim())),
            }
        }
        if !unknown.is_empty() {
            let valid: Vec<String> = nrba::longit::FIXED_TAGS.iter().map(|t| t.to_string()).collect();
            problems.push(format!(
                "unknown method tag {}; valid tags: {}, MI-offset(<k>)",
                unknown.join(", "),
                valid.join(", ")
            ));
        }
        if self.offsets.is_some() && !tags.iter().any(|t| t.offset().is_some()) {
            problems.push("offsets are only valid together with an MI method (MI-seq or MI-offset)".into());
        }
        if let Some(ks) = &self.offsets {
            if ks.is_empty() || ks.iter().any(|k| !k.is_finite()) {
                problems.push("offsets must be a non-empty list of finite numbers".into());
            }
        }
        if self.m < 2 {
            problems.push(format!("m must be at least 2, got {}", self.m));
        }
        if self.bootstrap != 0 && self.bootstrap < 50 {
            problems.push(format!("bootstrap needs at least 50 replicates, got {}", self.bootstrap));
        }
        if let Some(q) = self.weights.trim {
            if !(q > 0.0 && q <= 1.0) {
                problems.push(format!("trim quantile must lie in (0, 1], got {q}"));
            }
        }
        if self.weights.propensity.is_empty() {
            problems.push("weights.propensity needs at least one spec".into());
        }
        for s in &self.weights.propensity {
            if let Err(e) = s.validate() {
                problems.push(e.to_string());
            }
        }
        if !(self.weight_power.is_finite() && self.weight_power > 0.0) {
            problems.push("weight_power must be positive".into());
        }
        if let Some(f) = &self.formula {
            if let Err(e) = AnalysisFormula::new(f.clone()) {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(NrbaError::Config(problems.join("; ")).into())
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("nrba_out"))
    }

    pub fn method_tags(&self) -> CliResult<Vec<MethodTag>> {
        if self.methods.is_empty() {
            return Err(NrbaError::Config("no methods selected".into()).into());
        }
        Ok(self.methods.iter().map(|m| MethodTag::parse(m)).collect::<nrba::Result<_>>()?)
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.offsets.clone().unwrap_or_else(|| DEFAULT_OFFSETS.to_vec())
    }

    /// Configured formula, or wave means (by group when one is set).
    pub fn formula(&self) -> AnalysisFormula {
        match &self.formula {
            Some(t) => AnalysisFormula { terms: t.clone() },
            None => {
                let mut terms = vec![Term::Wave];
                if let Some(g) = &self.group {
                    terms.push(Term::Categorical(g.clone()));
                    terms.push(Term::WaveBy(g.clone()));
                }
                AnalysisFormula { terms }
            }
        }
    }

    /// Canonical JSON of the resolved configuration, without the output
    /// location.
    pub fn canonical_json(&self) -> String {
        let cfg = RunConfig { out: None, ..self.clone() };
        serde_json::to_string(&cfg).expect("config serializes")
    }
}

/// Format an offset for directory names and tags.
pub fn offset_label(k: f64) -> String {
    format!("k{k}")
}
