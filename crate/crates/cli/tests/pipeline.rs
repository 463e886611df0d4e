mod common;

use std::collections::BTreeSet;

use common::*;
use nrba::panel::{load_panel, summarize_patterns, Schema};
use serde_json::json;

#[test]
fn full_pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &[]);
    for f in [
        "pattern/patterns.csv",
        "pattern/rates.csv",
        "pattern/items.csv",
        "weights/weights.csv",
        "weights/diagnostics.csv",
        "weights/quintiles.csv",
        "weights/models.csv",
        "impute/manifest.json",
        "impute/imputed_5.csv",
        "sensitivity/sensitivity.csv",
        "sensitivity/k-1.2/manifest.json",
        "estimate/estimates.csv",
        "estimate/wave_group.csv",
        "report/report.md",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let m = manifest(&out);
    for s in STAGES {
        assert!(m["stages"][s]["outputs"].as_object().is_some_and(|o| !o.is_empty()), "{s}");
    }
}

#[test]
fn rerun_is_byte_identical_and_reuses_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({}));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    pipeline(&cfg, &a, &[]);
    pipeline(&cfg, &b, &[]);
    assert_eq!(tree(&a), tree(&b));
    let (ma, mb) = (manifest(&a), manifest(&b));
    assert_eq!(ma["stages"], mb["stages"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);

    let before = tree(&a);
    for s in STAGES {
        let o = stage(s, &cfg, &a, &["-v"]);
        assert!(String::from_utf8_lossy(&o.stderr).contains("reusing outputs"), "{s} recomputed");
    }
    assert_eq!(tree(&a), before);
    assert_eq!(manifest(&a)["stages"], ma["stages"]);
}

#[test]
fn warnings_are_logged_once() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &[]);
    let m = manifest(&out);
    let all: Vec<&str> = m["warnings"].as_array().unwrap().iter().map(|w| w.as_str().unwrap()).collect();
    assert!(!all.is_empty());
    let unique: BTreeSet<&str> = all.iter().copied().collect();
    assert_eq!(unique.len(), all.len());
    let mut from_stages = BTreeSet::new();
    for rec in m["stages"].as_object().unwrap().values() {
        let w: Vec<&str> = rec["warnings"].as_array().unwrap().iter().map(|w| w.as_str().unwrap()).collect();
        assert_eq!(w.iter().collect::<BTreeSet<_>>().len(), w.len());
        from_stages.extend(w);
    }
    assert_eq!(from_stages, unique);
}

#[test]
fn pattern_rates_match_library_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    stage("pattern", &cfg, &out, &[]);
    let schema = Schema::from_path(&core_fixture("schema.json")).unwrap();
    let data = load_panel(&core_fixture("panel.csv"), &schema).unwrap();
    let s = summarize_patterns(&data, Some("race")).unwrap();
    let mut expected = Vec::new();
    s.write_rates_csv(&mut expected).unwrap();
    assert_eq!(std::fs::read(out.join("pattern/rates.csv")).unwrap(), expected);

    // One row per (wave, race level) plus the overall rows.
    let mut r = csv::Reader::from_path(out.join("pattern/rates.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    let mut raw = csv::Reader::from_path(core_fixture("panel.csv")).unwrap();
    let col = raw.headers().unwrap().iter().position(|h| h == "race").unwrap();
    let levels: BTreeSet<String> = raw.records().map(|x| x.unwrap()[col].to_string()).collect();
    let groups: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[0] != "all").collect();
    assert_eq!(groups.len(), 5 * levels.len());
    for lv in &levels {
        let waves: Vec<&str> = groups.iter().filter(|r| &r[0] == lv).map(|r| &r[1]).collect();
        assert_eq!(waves, ["1", "2", "3", "4", "5"]);
    }
}

#[test]
fn complete_data_has_zero_rates_and_cca_equals_aca() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(tmp.path(), json!({ "n": 80, "n_clusters": 10, "seed": 11, "dropout": { "mechanism": "mcar", "rates": [0.0, 0.0, 0.0, 0.0, 0.0] } }), &sim);
    let cfg = config_with(
        tmp.path(),
        json!({
            "input": sim.join("simulate/panel.csv"),
            "schema": sim.join("simulate/schema.json"),
            "methods": ["CCA", "ACA"],
        }),
    );
    let out = tmp.path().join("out");
    stage("pattern", &cfg, &out, &[]);
    let mut r = csv::Reader::from_path(out.join("pattern/rates.csv")).unwrap();
    for rec in r.records() {
        assert_eq!(rec.unwrap()[3].parse::<f64>().unwrap(), 0.0);
    }
    stage("estimate", &cfg, &out, &[]);
    let rows = read_rows(&out.join("estimate/estimates.csv"));
    let cca: Vec<&Row> = rows.iter().filter(|r| r.method == "CCA").collect();
    // Overall, six wave means, and six waves by five race levels.
    assert_eq!(cca.len(), 1 + 6 + 6 * 5);
    for c in cca {
        let a = get(&rows, "ACA", &c.estimand);
        assert_eq!((c.est, c.se), (a.est, a.se), "{}", c.estimand);
    }
}

#[test]
fn zero_offset_sensitivity_equals_mi_seq() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({ "methods": ["MI-seq"], "offsets": [0.0] }));
    let out = tmp.path().join("out");
    for s in ["impute", "sensitivity", "estimate"] {
        stage(s, &cfg, &out, &[]);
    }
    let sens = read_rows(&out.join("sensitivity/sensitivity.csv"));
    let mi = read_rows(&out.join("estimate/estimates.csv"));
    assert_eq!(sens.len(), mi.len());
    for (s, m) in sens.iter().zip(&mi) {
        assert_eq!(m.method, "MI-seq");
        assert_eq!((&s.estimand, s.est, s.se), (&m.estimand, m.est, m.se));
    }
}

#[test]
fn report_lists_configured_tags_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &[]);
    let configured: Vec<String> = serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&cfg).unwrap())
        .unwrap()["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m.as_str().unwrap().to_string())
        .collect();
    let report = std::fs::read_to_string(out.join("report/report.md")).unwrap();
    assert!(report.contains(&format!("Methods: {}\n", configured.join(", "))));
    let in_table: BTreeSet<String> =
        read_rows(&out.join("estimate/estimates.csv")).into_iter().map(|r| r.method).collect();
    assert_eq!(in_table, configured.iter().cloned().collect());

    // Sweep rows in configured order with decreasing means.
    let sweep: Vec<Vec<String>> = report
        .split("## Offset sensitivity")
        .nth(1)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("| -"))
        .map(|l| l.split('|').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
        .collect();
    let ks: Vec<&str> = sweep.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ks, ["-0.8", "-1.2", "-1.6"]);
    let sens = read_rows(&out.join("sensitivity/sensitivity.csv"));
    for estimand in ["mean[overall]", "mean[w5]"] {
        let v: Vec<f64> = ["-0.8", "-1.2", "-1.6"]
            .iter()
            .map(|k| get(&sens, &format!("MI-offset({k})"), estimand).est)
            .collect();
        assert!(v[0] > v[1] && v[1] > v[2], "{estimand}: {v:?}");
        assert!(get(&sens, "MI-offset(-0.8)", estimand).est < get(&read_rows(&out.join("estimate/estimates.csv")), "MI-seq", estimand).est);
    }
}

#[test]
fn group_means_cover_every_wave_and_level() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), json!({ "methods": ["CCA", "ACA"] }));
    let out = tmp.path().join("out");
    stage("estimate", &cfg, &out, &[]);
    let mut r = csv::Reader::from_path(out.join("estimate/wave_group.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    for method in ["CCA", "ACA"] {
        let cells: BTreeSet<(String, String)> = rows
            .iter()
            .filter(|r| &r[0] == method && &r[1] == "mean")
            .map(|r| (r[2].to_string(), r[4].to_string()))
            .collect();
        assert_eq!(cells.len(), 6 * 5, "{method}");
    }
}

#[test]
fn simulate_replays_and_mcar_zero_is_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(tmp.path(), json!({ "n": 60, "n_clusters": 6, "seed": 21 }), &a);
    stage("simulate", &a.join("simulate/scenario.json"), &b, &[]);
    assert_eq!(tree(&a), tree(&b));

    let c = tmp.path().join("c");
    stage("simulate", &a.join("simulate/scenario.json"), &c, &["--seed", "22"]);
    assert_ne!(tree(&a)["simulate/panel.csv"], tree(&c)["simulate/panel.csv"]);

    let d = tmp.path().join("d");
    simulate(tmp.path(), json!({ "n": 60, "n_clusters": 6, "seed": 21, "dropout": { "mechanism": "mcar", "rates": [0.0, 0.0, 0.0, 0.0, 0.0] } }), &d);
    let t = tree(&d);
    assert_eq!(t["simulate/panel.csv"], t["simulate/complete.csv"]);
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = dir.join("out");
    let out_s = out.to_str().unwrap();
    let code = |args: &[&str]| {
        let o = nrba(args);
        (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
    };

    let (c, msg) = code(&["pattern"]);
    assert_eq!(c, 2, "{msg}");

    let cfg = config_with(dir, json!({}));
    let cfg_s = cfg.to_str().unwrap();
    let (c, msg) = code(&["estimate", "--config", cfg_s, "--out", out_s]);
    assert_eq!(c, 2);
    assert!(msg.contains("run `nrba weights` first"), "{msg}");
    let (c, msg) = code(&["report", "--config", cfg_s, "--out", out_s]);
    assert_eq!(c, 2);
    assert!(msg.contains("run `nrba estimate` first"), "{msg}");

    let empty = dir.join("empty");
    std::fs::create_dir(&empty).unwrap();
    let cfg = config_with(&empty, json!({ "methods": [] }));
    for cmd in ["estimate", "report"] {
        let (c, msg) = code(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out_s]);
        assert_eq!(c, 2);
        assert!(msg.contains("no methods selected"), "{msg}");
    }

    let bad = dir.join("bad");
    std::fs::create_dir(&bad).unwrap();
    let cfg = config_with(&bad, json!({ "methods": ["CCA", "MI-bogus"], "seed": null }));
    let (c, msg) = code(&["pattern", "--config", cfg.to_str().unwrap(), "--out", out_s]);
    assert_eq!(c, 2);
    assert!(msg.contains("unknown method tag `MI-bogus`") && msg.contains("seed is required"), "{msg}");

    let data = dir.join("data");
    std::fs::create_dir(&data).unwrap();
    let text = std::fs::read_to_string(core_fixture("panel.csv")).unwrap();
    let broken = data.join("panel.csv");
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = lines[3].replacen(',', ",not-a-number,", 1);
    std::fs::write(&broken, lines.join("\n")).unwrap();
    let cfg = config_with(&data, json!({ "input": broken }));
    let (c, msg) = code(&["pattern", "--config", cfg.to_str().unwrap(), "--out", out_s]);
    assert_eq!(c, 3, "{msg}");

    let scen = dir.join("scen.json");
    std::fs::write(&scen, r#"{"n":10,"n_clusters":20,"seed":1}"#).unwrap();
    let (c, msg) = code(&["simulate", "--config", scen.to_str().unwrap(), "--out", out_s]);
    assert_eq!(c, 2);
    assert!(msg.contains("n_clusters"), "{msg}");
}
