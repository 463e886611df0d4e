use std::path::Path;

use nrba::panel::{simulate_cohort, CohortScenario};
use nrba::NrbaError;
use serde_json::json;

use crate::error::CliResult;
use crate::logger;
use crate::manifest::{digest_bytes, digest_inputs, digest_tree, RunManifest, StageRecord};

/// Write `panel.csv`, `schema.json`, `truth.json`, `complete.csv` and the
/// resolved `scenario.json` (which replays the run) into `simulate/`.
pub fn cmd_simulate(config: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<()> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| NrbaError::Config(format!("cannot read scenario {}: {e}", config.display())))?;
    let mut scenario: CohortScenario =
        serde_json::from_str(&text).map_err(|e| NrbaError::Config(format!("scenario: {e}")))?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    scenario.validate()?;
    let resolved = serde_json::to_string_pretty(&scenario).expect("scenario serializes");
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| "nrba_out".into());
    let mut manifest = RunManifest::open(&out, digest_bytes(resolved.as_bytes()))?;
    let digest = digest_inputs(&json!({ "stage": "simulate", "scenario": scenario }));
    if manifest.is_current(&out, "simulate", &digest) {
        log::info!("simulate: scenario unchanged, reusing outputs");
        return Ok(());
    }
    logger::take_warnings();
    let dir = out.join("simulate");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    let (data, truth) = simulate_cohort(&scenario)?;
    data.write_csv(std::fs::File::create(dir.join("panel.csv"))?)?;
    truth.complete.write_csv(std::fs::File::create(dir.join("complete.csv"))?)?;
    std::fs::write(dir.join("schema.json"), data.schema().to_json() + "\n")?;
    std::fs::write(dir.join("truth.json"), truth.to_json() + "\n")?;
    std::fs::write(dir.join("scenario.json"), resolved + "\n")?;
    let outputs = digest_tree(&out, &dir)?;
    manifest.record("simulate", StageRecord { input_digest: digest, outputs, warnings: logger::take_warnings() });
    manifest.save(&out)
}
