#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const STAGES: [&str; 6] = ["pattern", "weights", "impute", "sensitivity", "estimate", "report"];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn nrba(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nrba")).args(args).output().expect("binary runs")
}

/// Run one subcommand, panicking with stderr on failure.
pub fn stage(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = nrba(&args);
    assert!(o.status.success(), "`nrba {cmd}` failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

pub fn pipeline(config: &Path, out: &Path, extra: &[&str]) {
    for s in STAGES {
        stage(s, config, out, extra);
    }
}

/// The bundled run config with overrides, written next to `dir`.
pub fn config_with(dir: &Path, overrides: Value) -> PathBuf {
    let text = std::fs::read_to_string(fixtures().join("run.json")).unwrap();
    let mut cfg: Value = serde_json::from_str(&text).unwrap();
    cfg["input"] = Value::String(core_fixture("panel.csv").to_string_lossy().into());
    cfg["schema"] = Value::String(core_fixture("schema.json").to_string_lossy().into());
    for (k, v) in overrides.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

/// Every file below `out` except the top-level run manifest, by relative path.
pub fn tree(out: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                if rel != "manifest.json" {
                    acc.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(out, out, &mut acc);
    acc
}

pub fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: String,
    pub estimand: String,
    pub est: f64,
    pub se: f64,
}

pub fn read_rows(path: &Path) -> Vec<Row> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            Row {
                method: rec[0].to_string(),
                estimand: rec[1].to_string(),
                est: rec[2].parse().unwrap(),
                se: rec[3].parse().unwrap(),
            }
        })
        .collect()
}

pub fn get<'a>(rows: &'a [Row], method: &str, estimand: &str) -> &'a Row {
    rows.iter()
        .find(|r| r.method == method && r.estimand == estimand)
        .unwrap_or_else(|| panic!("no row {method} {estimand}"))
}

/// Simulate a scenario into `out/simulate`.
pub fn simulate(dir: &Path, scenario: Value, out: &Path) {
    let path = dir.join("scenario.json");
    std::fs::write(&path, scenario.to_string()).unwrap();
    stage("simulate", &path, out, &[]);
}
