//! Bodies of the fuzz targets, kept here so the corpus can be replayed
//! with a plain `cargo test`.

use nrba::imputation::ImputationManifest;
use nrba::longit::EstimateTable;
use nrba::panel::{load_panel_str, simulate_cohort, CohortScenario, Schema};
use nrba::weighting::read_weights_csv;
use nrba_cli::{RunConfig, RunManifest};

const FIXTURE_SCHEMA: &str = include_str!("../../crates/core/tests/fixtures/schema.json");

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

/// Panel CSV against the bundled schema; anything that loads must survive
/// a write and reload unchanged.
pub fn panel_csv(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let schema = Schema::from_json_str(FIXTURE_SCHEMA).expect("bundled schema");
    if let Ok(d) = load_panel_str(s, &schema) {
        let back = load_panel_str(&d.to_csv_string(), &schema).expect("written panel reloads");
        assert_eq!(back.to_csv_string(), d.to_csv_string());
    }
}

pub fn schema_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(schema) = Schema::from_json_str(s) {
        let again = Schema::from_json_str(&schema.to_json()).expect("written schema reloads");
        assert_eq!(again, schema);
        let _ = schema.csv_columns();
    }
}

pub fn config_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(cfg) = RunConfig::from_json(s) {
        let _ = cfg.validate();
        let _ = cfg.method_tags();
        let _ = cfg.formula();
        let again = RunConfig::from_json(&cfg.canonical_json()).expect("canonical config reloads");
        assert_eq!(again, RunConfig { out: None, ..cfg });
    }
}

/// Simulation scenario; small valid ones are also run.
pub fn scenario_json(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let Ok(sc) = serde_json::from_str::<CohortScenario>(s) else { return };
    if sc.validate().is_err() || sc.n > 40 || sc.waves > 6 {
        return;
    }
    if let Ok((d, truth)) = simulate_cohort(&sc) {
        assert!(d.is_monotone());
        assert_eq!(truth.complete.n(), d.n());
    }
}

pub fn weights_csv(data: &[u8]) {
    let _ = read_weights_csv(data);
}

pub fn estimates_csv(data: &[u8]) {
    if let Ok(t) = EstimateTable::read_csv(data) {
        let mut out = Vec::new();
        t.write_csv(&mut out).expect("table writes");
        let again = EstimateTable::read_csv(out.as_slice()).expect("written table reloads");
        assert_eq!(again.rows.len(), t.rows.len());
    }
}

/// Imputation and run manifests.
pub fn manifest(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let _ = ImputationManifest::from_json(s);
    let _ = serde_json::from_str::<RunManifest>(s);
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    fn replay(target: &str, f: fn(&[u8])) {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(target);
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            f(&std::fs::read(entry.unwrap().path()).unwrap());
            seen += 1;
        }
        assert!(seen > 0, "no seeds in {}", dir.display());
    }

    #[test]
    fn corpus_replays() {
        replay("panel_csv", super::panel_csv);
        replay("schema_json", super::schema_json);
        replay("config_json", super::config_json);
        replay("scenario_json", super::scenario_json);
        replay("weights_csv", super::weights_csv);
        replay("estimates_csv", super::estimates_csv);
        replay("manifest", super::manifest);
    }
}
