use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use nrba::longit::{EstimateRow, EstimateTable};

use crate::error::CliResult;
use crate::stages::{nrba_csv, Pipeline, ESTIMATE, PATTERN, SENSITIVITY, WEIGHTS};

fn f2(v: f64) -> String {
    format!("{v:.2}")
}

fn ci(r: &EstimateRow) -> String {
    format!("({}, {})", f2(r.lower), f2(r.upper))
}

fn read_table(path: &Path) -> CliResult<Option<EstimateTable>> {
    if !path.is_file() {
        return Ok(None);
    }
    Ok(Some(EstimateTable::read_csv(File::open(path)?)?))
}

fn read_records(path: &Path) -> CliResult<Option<Vec<csv::StringRecord>>> {
    if !path.is_file() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path).map_err(nrba_csv)?;
    Ok(Some(r.records().collect::<Result<_, _>>().map_err(nrba_csv)?))
}

fn estimate_rows(doc: &mut String, rows: &[&EstimateRow], label: &str) {
    let _ = writeln!(doc, "| Method | {label} | Est | SE | 95% CI |");
    let _ = writeln!(doc, "|---|---|---:|---:|---|");
    for r in rows {
        let _ = writeln!(doc, "| {} | {} | {} | {} | {} |", r.method, r.estimand, f2(r.est), f2(r.se), ci(r));
    }
    doc.push('\n');
}

/// Markdown method-comparison report.
pub fn write_report(p: &Pipeline) -> CliResult<String> {
    let out = &p.out;
    let t_max = p.data.waves();
    let mut doc = String::new();
    let input = p.cfg.input.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let _ = writeln!(doc, "# Nonresponse bias analysis\n");
    let _ = writeln!(doc, "Input: `{input}`, {} units, waves 0 to {t_max}.\n", p.data.n());
    let _ = writeln!(doc, "Methods: {}\n", p.cfg.methods.join(", "));

    if let Some(rates) = read_records(&out.join(PATTERN).join("rates.csv"))? {
        let _ = writeln!(doc, "## Wave nonresponse (relative to wave 0)\n");
        let _ = writeln!(doc, "| Group | Wave | n | Rate |");
        let _ = writeln!(doc, "|---|---:|---:|---:|");
        for r in rates.iter().filter(|r| &r[0] == "all") {
            let rate: f64 = r[3].parse().unwrap_or(f64::NAN);
            let _ = writeln!(doc, "| {} | {} | {} | {} |", &r[0], &r[1], &r[2], f2(rate));
        }
        doc.push('\n');
    }

    let table = read_table(&out.join(ESTIMATE).join("estimates.csv"))?.unwrap_or_default();
    let means: Vec<&EstimateRow> =
        table.rows.iter().filter(|r| r.estimand.starts_with("mean[") && !r.estimand.contains('|')).collect();
    if !means.is_empty() {
        let _ = writeln!(doc, "## Method comparison: means\n");
        estimate_rows(&mut doc, &means, "Estimand");
    }
    let coefs: Vec<&EstimateRow> = table.rows.iter().filter(|r| r.estimand.starts_with("coef[")).collect();
    if !coefs.is_empty() {
        let _ = writeln!(doc, "## Model coefficients\n");
        estimate_rows(&mut doc, &coefs, "Term");
        if table.rows.iter().any(|r| r.method == "w-GEE") {
            let _ = writeln!(doc, "w-GEE standard errors are sandwich-only and approximate; see the bootstrap file for resampling SEs.\n");
        }
    }
    if let Some(boot) = read_records(&out.join(ESTIMATE).join("bootstrap.csv"))? {
        let _ = writeln!(doc, "## Cluster bootstrap\n");
        let _ = writeln!(doc, "| Method | Estimand | Est | SE (linearization) | SE (bootstrap) | B |");
        let _ = writeln!(doc, "|---|---|---:|---:|---:|---:|");
        for r in &boot {
            let num = |i: usize| r[i].parse::<f64>().map(f2).unwrap_or_default();
            let _ = writeln!(doc, "| {} | {} | {} | {} | {} | {} |", &r[0], &r[1], num(2), num(3), num(4), &r[5]);
        }
        doc.push('\n');
    }

    if let Some(diag) = read_records(&out.join(WEIGHTS).join("diagnostics.csv"))? {
        let _ = writeln!(doc, "## Weight diagnostics\n");
        let _ = writeln!(doc, "| Weights | n | Min | Median | Max | SD | Loss | Deff |");
        let _ = writeln!(doc, "|---|---:|---:|---:|---:|---:|---:|---:|");
        for r in &diag {
            let num = |i: usize| r[i].parse::<f64>().map(f2).unwrap_or_default();
            let _ = writeln!(doc, "| {} | {} | {} | {} | {} | {} | {} | {} |", &r[0], &r[9], num(1), num(3), num(5), num(6), num(7), num(8));
        }
        doc.push('\n');
    }

    if let Some(sens) = read_table(&out.join(SENSITIVITY).join("sensitivity.csv"))? {
        let final_wave = format!("mean[w{t_max}]");
        let _ = writeln!(doc, "## Offset sensitivity\n");
        if let Some(r) = table.get("MI-seq", &final_wave) {
            let _ = writeln!(doc, "MI-seq (k = 0) wave {t_max} mean: {} (SE {}).\n", f2(r.est), f2(r.se));
        }
        let _ = writeln!(doc, "| k | Overall | SE | Wave {t_max} | SE | 95% CI |");
        let _ = writeln!(doc, "|---:|---:|---:|---:|---:|---|");
        let mut methods: Vec<&str> = Vec::new();
        for r in &sens.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        for m in methods {
            let k = m.trim_start_matches("MI-offset(").trim_end_matches(')');
            let (Some(o), Some(f)) = (sens.get(m, "mean[overall]"), sens.get(m, &final_wave)) else { continue };
            let _ = writeln!(doc, "| {k} | {} | {} | {} | {} | {} |", f2(o.est), f2(o.se), f2(f.est), f2(f.se), ci(f));
        }
        doc.push('\n');
    }

    let _ = writeln!(doc, "## Plot data\n");
    let _ = writeln!(doc, "- `{ESTIMATE}/wave_group.csv`: subgroup-by-wave means and wave-by-group coefficients per method.");
    let _ = writeln!(doc, "- `{ESTIMATE}/estimates.csv`: every estimate at full precision.");
    Ok(doc)
}
