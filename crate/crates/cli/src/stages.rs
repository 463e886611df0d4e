use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nrba::imputation::{impute_item_nonresponse, sequential_mi, ImputationSet};
use nrba::longit::{estimate_table, EstimationInputs, MethodTag, WeightBundle};
use nrba::panel::{load_panel, monotonize, summarize_patterns, MonotoneMode, PanelDataset, Schema};
use nrba::weighting::{
    baseline_weights, bootstrap_se, cca_weights, read_weights_csv, sequential_weights, trim_weights, weight_diagnostics,
    weighted_mean, write_diagnostics_csv, write_quintiles_csv, write_weights_csv, PropensitySpec, WeightSet,
};
use nrba::NrbaError;
use serde_json::json;

use crate::config::{offset_label, MonotoneHandling, RunConfig};
use crate::error::CliResult;
use crate::logger;
use crate::manifest::{digest_bytes, digest_file, digest_inputs, digest_tree, RunManifest, StageRecord};
use crate::report::write_report;

pub const PATTERN: &str = "pattern";
pub const WEIGHTS: &str = "weights";
pub const IMPUTE: &str = "impute";
pub const SENSITIVITY: &str = "sensitivity";
pub const ESTIMATE: &str = "estimate";
pub const REPORT: &str = "report";

/// Loaded inputs plus the run manifest for one invocation.
pub struct Pipeline {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub schema: Schema,
    /// Data as read.
    pub raw: PanelDataset,
    /// Data with a monotone response pattern.
    pub data: PanelDataset,
    data_digest: String,
    prep_warnings: Vec<String>,
    pub manifest: RunManifest,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).map_err(|e| NrbaError::Io(e).context(format!("creating {}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn missing_upstream(path: &Path, command: &str) -> NrbaError {
    NrbaError::Config(format!("missing upstream artifact {}; run `nrba {command}` first", path.display()))
}

impl Pipeline {
    pub fn open(cfg: RunConfig) -> CliResult<Self> {
        logger::take_warnings();
        let schema = Schema::from_path(&cfg.schema).map_err(|e| e.context(format!("schema {}", cfg.schema.display())))?;
        let raw = load_panel(&cfg.input, &schema).map_err(|e| e.context(format!("input {}", cfg.input.display())))?;
        if let Some(g) = &cfg.group {
            raw.var(g)?;
        }
        let data = if raw.is_monotone() {
            raw.clone()
        } else {
            let mode = match cfg.monotone {
                MonotoneHandling::Drop => MonotoneMode::Drop,
                MonotoneHandling::Impute => MonotoneMode::Impute { seed: cfg.seed() },
            };
            let (d, report) = monotonize(&raw, mode)?;
            log::warn!("{} units with intermittent returns made monotone ({:?})", report.units.len(), cfg.monotone);
            d
        };
        let data_digest = digest_bytes(
            format!("{}\n{}", digest_file(&cfg.input)?, digest_file(&cfg.schema)?).as_bytes(),
        );
        let out = cfg.out_dir();
        std::fs::create_dir_all(&out)?;
        let manifest = RunManifest::open(&out, digest_bytes(cfg.canonical_json().as_bytes()))?;
        Ok(Pipeline { cfg, out, schema, raw, data, data_digest, prep_warnings: logger::take_warnings(), manifest })
    }

    fn data_inputs(&self) -> serde_json::Value {
        let seed = (self.cfg.monotone == MonotoneHandling::Impute).then(|| self.cfg.seed());
        json!({ "data": self.data_digest, "monotone": self.cfg.monotone, "monotone_seed": seed })
    }

    fn run_stage<F>(&mut self, name: &str, inputs: serde_json::Value, body: F) -> CliResult<()>
    where
        F: FnOnce(&Self, &Path) -> CliResult<()>,
    {
        let digest = digest_inputs(&json!({ "stage": name, "inputs": inputs }));
        if self.manifest.is_current(&self.out, name, &digest) {
            log::info!("{name}: inputs unchanged, reusing outputs");
            return Ok(());
        }
        let dir = self.out.join(name);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        logger::take_warnings();
        body(self, &dir)?;
        let mut warnings = self.prep_warnings.clone();
        warnings.extend(logger::take_warnings());
        warnings.sort();
        warnings.dedup();
        let outputs = digest_tree(&self.out, &dir)?;
        self.manifest.record(name, StageRecord { input_digest: digest, outputs, warnings });
        self.manifest.save(&self.out)
    }

    pub fn pattern(&mut self) -> CliResult<()> {
        let inputs = json!({ "data": self.data_digest, "group": self.cfg.group });
        self.run_stage(PATTERN, inputs, |p, dir| {
            let s = summarize_patterns(&p.raw, p.cfg.group.as_deref())?;
            s.write_patterns_csv(create(&dir.join("patterns.csv"))?)?;
            s.write_rates_csv(create(&dir.join("rates.csv"))?)?;
            s.write_items_csv(create(&dir.join("items.csv"))?)?;
            Ok(())
        })
    }

    fn spec_for(&self, wave: usize) -> &PropensitySpec {
        let specs = &self.cfg.weights.propensity;
        if specs.len() == 1 { &specs[0] } else { &specs[wave - 1] }
    }

    /// All attrition weight sets (trimmed when configured) with their
    /// diagnostics rows.
    /// Propensity models need complete covariates in responding waves, so
    /// item holes are filled once with a single chained-equations draw.
    fn item_completed(&self) -> CliResult<PanelDataset> {
        Ok(impute_item_nonresponse(&self.data, &self.cfg.imputer, self.cfg.seed())
            .map_err(|e| e.context("item imputation for weighting"))?)
    }

    fn build_weights(&self) -> CliResult<(Vec<WeightSet>, Vec<(String, nrba::weighting::WeightDiagnostics)>)> {
        let data = &self.item_completed()?;
        let t_max = data.waves();
        let specs = &self.cfg.weights.propensity;
        if specs.len() != 1 && specs.len() != t_max {
            return Err(NrbaError::Config(format!("weights.propensity needs 1 or {t_max} specs, got {}", specs.len())).into());
        }
        let mut sets = vec![cca_weights(data, self.spec_for(t_max)).map_err(|e| e.context("CCA-attr weights"))?];
        for t in 1..=t_max {
            sets.push(baseline_weights(data, t, self.spec_for(t)).map_err(|e| e.context(format!("ACA-attr weights, wave {t}")))?);
        }
        sets.extend(sequential_weights(data, specs)?);
        let mut diag = Vec::new();
        let y = |s: &WeightSet| -> Vec<f64> { s.units.iter().map(|&u| data.outcome(s.wave)[u]).collect() };
        let mut out = Vec::with_capacity(sets.len());
        for s in sets {
            diag.push((s.label(), weight_diagnostics(&s.weights, Some(&y(&s)))));
            let s = match self.cfg.weights.trim {
                Some(q) => {
                    let t = trim_weights(&s, q)?;
                    diag.push((format!("{}-trim", s.label()), weight_diagnostics(&t.weights, Some(&y(&t)))));
                    t
                }
                None => s,
            };
            out.push(s);
        }
        Ok((out, diag))
    }

    pub fn weights(&mut self) -> CliResult<()> {
        let inputs = json!({
            "data": self.data_inputs(),
            "weights": self.cfg.weights,
            "imputer": self.cfg.imputer,
            "seed": self.cfg.seed(),
        });
        self.run_stage(WEIGHTS, inputs, |p, dir| {
            let (sets, diag) = p.build_weights()?;
            write_weights_csv(&sets, create(&dir.join("weights.csv"))?)?;
            write_diagnostics_csv(&diag, create(&dir.join("diagnostics.csv"))?)?;
            write_quintiles_csv(&diag, create(&dir.join("quintiles.csv"))?)?;
            let mut models = csv::Writer::from_writer(create(&dir.join("models.csv"))?);
            models.write_record(["weights", "auc", "terms", "clipped", "trimmed"]).map_err(nrba_csv)?;
            for s in &sets {
                let auc = s.auc.map(|a| a.to_string()).unwrap_or_default();
                let trimmed = s.trimming.as_ref().map_or(0, |t| t.trimmed).to_string();
                models.write_record([s.label(), auc, s.terms.join(";"), s.clipped.to_string(), trimmed]).map_err(nrba_csv)?;
            }
            models.flush()?;
            Ok(())
        })
    }

    fn impute_inputs(&self) -> serde_json::Value {
        json!({ "data": self.data_inputs(), "imputer": self.cfg.imputer, "m": self.cfg.m, "seed": self.cfg.seed() })
    }

    pub fn impute(&mut self) -> CliResult<()> {
        let inputs = self.impute_inputs();
        self.run_stage(IMPUTE, inputs, |p, dir| {
            let set = sequential_mi(&p.data, &p.cfg.imputer, p.cfg.m, &[], p.cfg.seed())?;
            set.write_dir(dir)?;
            Ok(())
        })
    }

    fn table_inputs(&self) -> serde_json::Value {
        json!({
            "formula": self.cfg.formula(),
            "group": self.cfg.group,
            "working": self.cfg.working,
            "weight_power": self.cfg.weight_power,
        })
    }

    pub fn sensitivity(&mut self) -> CliResult<()> {
        let inputs = json!({ "impute": self.impute_inputs(), "offsets": self.cfg.offsets(), "table": self.table_inputs() });
        self.run_stage(SENSITIVITY, inputs, |p, dir| {
            let t_max = p.data.waves();
            let mut sets = Vec::new();
            for k in p.cfg.offsets() {
                let set = sequential_mi(&p.data, &p.cfg.imputer, p.cfg.m, &vec![k; t_max], p.cfg.seed())
                    .map_err(|e| e.context(format!("offset k = {k}")))?;
                set.write_dir(&dir.join(offset_label(k)))?;
                sets.push(set);
            }
            let formula = p.cfg.formula();
            let mut inputs = EstimationInputs::new(&p.data, &formula);
            inputs.group = p.cfg.group.as_deref();
            inputs.working = p.cfg.working;
            inputs.imputations = sets.iter().collect();
            let tags: Vec<MethodTag> = p.cfg.offsets().into_iter().map(MethodTag::MiOffset).collect();
            estimate_table(&inputs, &tags)?.write_csv(create(&dir.join("sensitivity.csv"))?)?;
            Ok(())
        })
    }

    pub fn estimate(&mut self) -> CliResult<()> {
        let tags = self.cfg.method_tags()?;
        let mut upstream = serde_json::Map::new();
        let weights_file = self.out.join(WEIGHTS).join("weights.csv");
        if tags.iter().any(|t| t.needs_weights()) || self.cfg.bootstrap > 0 {
            if !weights_file.is_file() {
                return Err(missing_upstream(&weights_file, "weights").into());
            }
            upstream.insert("weights".into(), json!(digest_file(&weights_file)?));
        }
        let mut imp_dirs = Vec::new();
        for t in &tags {
            match t {
                MethodTag::MiSeq => imp_dirs.push((self.out.join(IMPUTE), "impute")),
                MethodTag::MiOffset(k) => imp_dirs.push((self.out.join(SENSITIVITY).join(offset_label(*k)), "sensitivity")),
                _ => {}
            }
        }
        for (d, command) in &imp_dirs {
            let m = d.join("manifest.json");
            if !m.is_file() {
                return Err(missing_upstream(&m, command).into());
            }
            upstream.insert(rel(&self.out, d), json!(digest_tree(&self.out, d)?));
        }
        let inputs = json!({
            "data": self.data_inputs(),
            "methods": self.cfg.methods,
            "table": self.table_inputs(),
            "bootstrap": self.cfg.bootstrap,
            "seed": self.cfg.seed(),
            "weights": self.cfg.weights,
            "upstream": upstream,
        });
        self.run_stage(ESTIMATE, inputs, |p, dir| {
            let bundle = if weights_file.is_file() && tags.iter().any(|t| t.needs_weights()) {
                let records = read_weights_csv(File::open(&weights_file)?)?;
                Some(WeightBundle::from_records(&p.data, &records)?)
            } else {
                None
            };
            let sets: Vec<ImputationSet> =
                imp_dirs.iter().map(|(d, _)| ImputationSet::read_dir(d, &p.schema)).collect::<nrba::Result<_>>()?;
            let formula = p.cfg.formula();
            let mut inputs = EstimationInputs::new(&p.data, &formula);
            inputs.group = p.cfg.group.as_deref();
            inputs.weights = bundle.as_ref();
            inputs.working = p.cfg.working;
            inputs.weight_power = p.cfg.weight_power;
            inputs.imputations = sets.iter().collect();
            let table = estimate_table(&inputs, &tags)?;
            table.write_csv(create(&dir.join("estimates.csv"))?)?;
            table.write_wave_group_csv(create(&dir.join("wave_group.csv"))?)?;
            if p.cfg.bootstrap > 0 {
                p.bootstrap(dir, &table)?;
            }
            Ok(())
        })
    }

    /// Cluster-bootstrap SEs for the sequentially weighted overall and
    /// final-wave means, refitting the weights in every replicate.
    fn bootstrap(&self, dir: &Path, table: &nrba::longit::EstimateTable) -> CliResult<()> {
        let t_max = self.data.waves();
        let specs = self.cfg.weights.propensity.clone();
        let trim = self.cfg.weights.trim;
        let mean_at = move |d: &PanelDataset, wave: Option<usize>| -> nrba::Result<f64> {
            let sets = sequential_weights(d, &specs)?;
            let (mut num, mut den) = (0.0, 0.0);
            for t in 0..=t_max {
                if wave.is_some_and(|w| w != t) {
                    continue;
                }
                let (units, w): (Vec<usize>, Vec<f64>) = if t == 0 {
                    (d.respondents(0), d.respondents(0).iter().map(|&u| d.base_weights()[u]).collect())
                } else {
                    let s = match trim {
                        Some(q) => trim_weights(&sets[t - 1], q)?,
                        None => sets[t - 1].clone(),
                    };
                    (s.units.clone(), s.weights.clone())
                };
                let y: Vec<f64> = units.iter().map(|&u| d.outcome(t)[u]).collect();
                let ids: Vec<&str> = units.iter().map(|&u| d.unit_ids()[u].as_str()).collect();
                let m = weighted_mean(&y, &w, &ids)?;
                let total: f64 = w.iter().sum();
                num += m.estimate * total;
                den += total;
            }
            Ok(num / den)
        };
        let data = self.item_completed()?;
        let clusters = data.clusters().to_vec();
        let mut w = csv::Writer::from_writer(create(&dir.join("bootstrap.csv"))?);
        w.write_record(["method", "estimand", "est", "se_linearization", "se_bootstrap", "replicates"]).map_err(nrba_csv)?;
        for (estimand, wave) in [("mean[overall]".to_string(), None), (format!("mean[w{t_max}]"), Some(t_max))] {
            let se = bootstrap_se(&data, &clusters, |d| mean_at(d, wave), self.cfg.bootstrap, self.cfg.seed())?;
            let (est, lin) = table
                .get("ACA-seq-attr-w", &estimand)
                .map(|r| (r.est.to_string(), r.se.to_string()))
                .unwrap_or_else(|| (mean_at(&data, wave).map(|v| v.to_string()).unwrap_or_default(), String::new()));
            w.write_record(["ACA-seq-attr-w", &estimand, &est, &lin, &se.to_string(), &self.cfg.bootstrap.to_string()])
                .map_err(nrba_csv)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn report(&mut self) -> CliResult<()> {
        self.cfg.method_tags()?;
        let est = self.out.join(ESTIMATE).join("estimates.csv");
        if !est.is_file() {
            return Err(missing_upstream(&est, "estimate").into());
        }
        let mut upstream = serde_json::Map::new();
        for f in [
            est.clone(),
            self.out.join(WEIGHTS).join("diagnostics.csv"),
            self.out.join(SENSITIVITY).join("sensitivity.csv"),
            self.out.join(PATTERN).join("rates.csv"),
            self.out.join(ESTIMATE).join("bootstrap.csv"),
        ] {
            if f.is_file() {
                upstream.insert(rel(&self.out, &f), json!(digest_file(&f)?));
            }
        }
        let inputs = json!({ "methods": self.cfg.methods, "upstream": upstream, "data": self.data_digest });
        self.run_stage(REPORT, inputs, |p, dir| {
            let text = write_report(p)?;
            std::fs::write(dir.join("report.md"), text)?;
            Ok(())
        })
    }
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub(crate) fn nrba_csv(e: csv::Error) -> NrbaError {
    NrbaError::Data(format!("csv: {e}"))
}
