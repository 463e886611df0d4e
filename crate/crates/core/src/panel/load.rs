use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::dataset::{slot_count, PanelDataset};
use super::schema::{Role, Schema, VarKind};
use crate::error::{NrbaError, Result};

/// Read a wide-format panel CSV.
///
/// Time-varying columns are named `<var>_w<t>`; cells equal to one of the
/// schema's missing sentinels are missing.
pub fn load_panel(path: &Path, schema: &Schema) -> Result<PanelDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| NrbaError::Data(format!("cannot open {}: {e}", path.display())))?;
    load_panel_from_reader(file, schema)
}

pub fn load_panel_str(text: &str, schema: &Schema) -> Result<PanelDataset> {
    load_panel_from_reader(text.as_bytes(), schema)
}

pub fn load_panel_from_reader<R: Read>(reader: R, schema: &Schema) -> Result<PanelDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| NrbaError::Parse { row: 1, column: String::new(), message: e.to_string() })?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| NrbaError::Schema(format!("input lacks column `{name}`")))
    };
    let id_col = col(&schema.id)?;
    // (var, slot) -> csv column index
    let mut layout: Vec<Vec<usize>> = Vec::with_capacity(schema.variables.len());
    for (i, v) in schema.variables.iter().enumerate() {
        layout.push(match v.role {
            Role::ClusterId | Role::BaseWeight => vec![col(&v.name)?],
            r if r.is_wave_specific() => {
                (0..=schema.waves).map(|t| col(&schema.column_name(i, t))).collect::<Result<_>>()?
            }
            _ => vec![col(&v.name)?],
        });
    }
    let mut ids = Vec::new();
    let mut clusters = Vec::new();
    let mut weights = Vec::new();
    let mut values: Vec<Vec<Vec<f64>>> = schema
        .variables
        .iter()
        .map(|v| vec![Vec::new(); slot_count(schema, v.role)])
        .collect();
    let mut seen = HashMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| NrbaError::Parse { row, column: String::new(), message: e.to_string() })?;
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let id = cell(id_col).to_string();
        if id.is_empty() {
            return Err(NrbaError::Parse { row, column: schema.id.clone(), message: "empty unit id".into() });
        }
        if let Some(prev) = seen.insert(id.clone(), row) {
            return Err(NrbaError::Parse {
                row,
                column: schema.id.clone(),
                message: format!("duplicate unit id `{id}` (first seen at row {prev})"),
            });
        }
        ids.push(id);
        for (i, v) in schema.variables.iter().enumerate() {
            match v.role {
                Role::ClusterId => {
                    let s = cell(layout[i][0]);
                    if s.is_empty() || schema.missing.iter().any(|m| m == s) {
                        return Err(NrbaError::Parse { row, column: v.name.clone(), message: "missing cluster id".into() });
                    }
                    clusters.push(s.to_string());
                }
                Role::BaseWeight => {
                    let s = cell(layout[i][0]);
                    let w: f64 = s.parse().map_err(|_| NrbaError::Parse {
                        row,
                        column: v.name.clone(),
                        message: format!("cannot parse base weight `{s}`"),
                    })?;
                    if !(w.is_finite() && w > 0.0) {
                        return Err(NrbaError::Parse {
                            row,
                            column: v.name.clone(),
                            message: format!("base weight must be strictly positive, found {w}"),
                        });
                    }
                    weights.push(w);
                }
                _ => {
                    for (slot, &c) in layout[i].iter().enumerate() {
                        let s = cell(c);
                        let parsed = parse_cell(s, &v.kind, &schema.missing).map_err(|message| NrbaError::Parse {
                            row,
                            column: headers.get(c).unwrap_or_default().to_string(),
                            message,
                        })?;
                        values[i][slot].push(parsed);
                    }
                }
            }
        }
    }
    PanelDataset::from_parts(schema.clone(), ids, clusters, weights, values)
}

fn parse_cell(s: &str, kind: &VarKind, missing: &[String]) -> std::result::Result<f64, String> {
    if missing.iter().any(|m| m == s) {
        return Ok(f64::NAN);
    }
    match kind {
        VarKind::Numeric => match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("cannot parse `{s}` as a number")),
        },
        VarKind::Binary => match s {
            "0" => Ok(0.0),
            "1" => Ok(1.0),
            _ => Err(format!("binary cell must be 0 or 1, found `{s}`")),
        },
        VarKind::Nominal(levels) | VarKind::Ordinal(levels) => levels
            .iter()
            .position(|l| l == s)
            .map(|p| p as f64)
            .ok_or_else(|| format!("`{s}` is not a declared level")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::schema::VariableSpec;

    fn schema(waves: usize) -> Schema {
        Schema {
            id: "id".into(),
            waves,
            missing: vec!["".into(), "NA".into()],
            variables: vec![
                VariableSpec::new("sex", VarKind::Binary, Role::TimeInvariant),
                VariableSpec::new("y", VarKind::Numeric, Role::Outcome),
                VariableSpec::new("school", VarKind::Numeric, Role::ClusterId),
                VariableSpec::new("w", VarKind::Numeric, Role::BaseWeight),
            ],
        }
    }

    #[test]
    fn complete_file_all_respond() {
        let text = "id,sex,y_w0,y_w1,school,w\n1,0,1.5,2,s1,1\n2,1,1,2,s1,1\n3,0,3,4,s2,2\n4,1,0,1,s2,1\n";
        let d = load_panel_str(text, &schema(1)).unwrap();
        assert_eq!(d.n(), 4);
        assert!(d.response_matrix().iter().flatten().all(|&r| r));
    }

    #[test]
    fn missing_outcome_defines_response() {
        let text = "id,sex,y_w0,y_w1,y_w2,school,w\n1,0,1,2,3,a,1\n2,1,1,2,3,a,1\n3,0,1,,NA,a,1\n";
        let d = load_panel_str(text, &schema(2)).unwrap();
        assert_eq!(d.response_matrix()[2], vec![true, false, false]);
    }

    #[test]
    fn errors_name_row_and_column() {
        let text = "id,sex,y_w0,y_w1,school,w\n1,0,1,abc,a,1\n";
        match load_panel_str(text, &schema(1)).unwrap_err() {
            NrbaError::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y_w1");
            }
            e => panic!("{e}"),
        }
        let neg = "id,sex,y_w0,y_w1,school,w\n1,0,1,1,a,-2\n";
        assert!(load_panel_str(neg, &schema(1)).unwrap_err().to_string().contains("positive"));
        let dup = "id,sex,y_w0,y_w1,school,w\n1,0,1,1,a,1\n1,0,1,1,a,1\n";
        assert!(load_panel_str(dup, &schema(1)).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn baseline_nonrespondents_excluded() {
        let text = "id,sex,y_w0,y_w1,school,w\n1,0,1,2,a,1\n2,1,,2,a,1\n";
        let d = load_panel_str(text, &schema(1)).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.excluded_units(), &["2".to_string()]);
    }

    #[test]
    fn csv_round_trip() {
        let text = "id,sex,y_w0,y_w1,school,w\n1,0,1.25,,a,1.5\n2,1,0.1,0.30000000000000004,b,1\n";
        let d = load_panel_str(text, &schema(1)).unwrap();
        let again = load_panel_str(&d.to_csv_string(), &schema(1)).unwrap();
        assert_eq!(d, again);
    }
}
