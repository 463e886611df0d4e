#![allow(dead_code)]

use std::path::PathBuf;

use nrba::panel::{load_panel, PanelDataset, Schema};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The bundled n = 50, T = 5 panel.
pub fn fixture() -> PanelDataset {
    let schema = Schema::from_path(&fixture_path("schema.json")).unwrap();
    load_panel(&fixture_path("panel.csv"), &schema).unwrap()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Monte Carlo standard error of the mean of `x`.
pub fn mc_se(x: &[f64]) -> f64 {
    sd(x) / (x.len() as f64).sqrt()
}
