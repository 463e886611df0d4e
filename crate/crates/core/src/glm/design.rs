use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{NrbaError, Result};
use crate::frame::{Column, Frame};
use crate::linalg::collinear_columns;

/// Dense regression design with labelled columns grouped into term blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub labels: Vec<String>,
    /// One block per source term; blocks are contiguous and cover every
    /// non-intercept column.
    pub blocks: Vec<TermBlock>,
    /// Column 0 is an all-ones intercept.
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermBlock {
    pub name: String,
    pub cols: Range<usize>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, labels: Vec<String>, intercept: bool) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(NrbaError::Data(format!(
                "{} labels for {} columns",
                labels.len(),
                x.ncols()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(NrbaError::Data(format!("duplicate column label `{l}`")));
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(NrbaError::Data("design matrix has missing or non-finite entries".into()));
        }
        let start = usize::from(intercept);
        let blocks = (start..labels.len())
            .map(|j| TermBlock { name: labels[j].clone(), cols: j..j + 1 })
            .collect();
        Ok(Self { x, labels, blocks, intercept })
    }

    /// Build from row-major data with an intercept column prepended.
    pub fn with_intercept(rows: usize, data: &[f64], labels: &[&str]) -> Result<Self> {
        let p = labels.len();
        let x = DMatrix::from_fn(rows, p + 1, |i, j| if j == 0 { 1.0 } else { data[i * p + j - 1] });
        let mut l = vec!["(Intercept)".to_string()];
        l.extend(labels.iter().map(|s| s.to_string()));
        Self::new(x, l, true)
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    /// Keep the intercept (if any) plus the listed blocks, in block order.
    pub fn select_blocks(&self, keep: &[usize]) -> DesignMatrix {
        let mut cols: Vec<usize> = if self.intercept { vec![0] } else { vec![] };
        let mut blocks = Vec::new();
        let mut sorted = keep.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for &b in &sorted {
            let blk = &self.blocks[b];
            let start = cols.len();
            cols.extend(blk.cols.clone());
            blocks.push(TermBlock { name: blk.name.clone(), cols: start..cols.len() });
        }
        DesignMatrix {
            x: self.x.select_columns(&cols),
            labels: cols.iter().map(|&c| self.labels[c].clone()).collect(),
            blocks,
            intercept: self.intercept,
        }
    }

    /// Keep the columns with the given labels, in design order.
    pub fn select_labels(&self, labels: &[String]) -> Result<DesignMatrix> {
        if let Some(l) = labels.iter().find(|l| !self.labels.contains(l)) {
            return Err(NrbaError::Data(format!("design lacks column `{l}`")));
        }
        let keep: Vec<usize> = (0..self.ncols()).filter(|&j| labels.contains(&self.labels[j])).collect();
        let mut blocks = Vec::new();
        for blk in &self.blocks {
            let kept: Vec<usize> = blk.cols.clone().filter(|j| keep.contains(j)).collect();
            if let Some(&first) = kept.first() {
                let start = keep.iter().position(|&k| k == first).expect("kept column");
                blocks.push(TermBlock { name: blk.name.clone(), cols: start..start + kept.len() });
            }
        }
        Ok(DesignMatrix {
            x: self.x.select_columns(&keep),
            labels: keep.iter().map(|&c| self.labels[c].clone()).collect(),
            blocks,
            intercept: self.intercept && keep.first() == Some(&0),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            x: self.x.select_rows(rows),
            labels: self.labels.clone(),
            blocks: self.blocks.clone(),
            intercept: self.intercept,
        }
    }

    /// Drop columns that are zero or collinear with earlier columns,
    /// returning the reduced design and the dropped labels.
    pub fn drop_collinear(&self, row_weights: Option<&[f64]>) -> (DesignMatrix, Vec<String>) {
        let bad = collinear_columns(&self.x, row_weights);
        if bad.is_empty() {
            return (self.clone(), Vec::new());
        }
        let keep: Vec<usize> = (0..self.ncols()).filter(|j| !bad.contains(j)).collect();
        let mut blocks = Vec::new();
        for blk in &self.blocks {
            let kept: Vec<usize> = blk.cols.clone().filter(|j| keep.contains(j)).collect();
            if kept.is_empty() {
                continue;
            }
            let start = keep.iter().position(|&k| k == kept[0]).unwrap();
            blocks.push(TermBlock { name: blk.name.clone(), cols: start..start + kept.len() });
        }
        let intercept = self.intercept && !bad.contains(&0);
        let reduced = DesignMatrix {
            x: self.x.select_columns(&keep),
            labels: keep.iter().map(|&c| self.labels[c].clone()).collect(),
            blocks,
            intercept,
        };
        (reduced, bad.iter().map(|&c| self.labels[c].clone()).collect())
    }
}

/// How one frame column enters the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Coding {
    Numeric,
    /// Dummy columns for every declared level except `reference`; levels
    /// unused in training are dropped and route to the reference.
    Dummies { levels: Vec<String>, reference: usize, kept: Vec<usize> },
}

/// Learns a dummy coding from a training frame and replays it on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBuilder {
    intercept: bool,
    names: Vec<String>,
    codings: Vec<Coding>,
}

impl DesignBuilder {
    /// Reference level for categorical columns is the first declared level.
    pub fn learn(frame: &Frame, intercept: bool) -> Self {
        let codings = frame
            .columns()
            .iter()
            .map(|c| match c {
                Column::Numeric(_) => Coding::Numeric,
                Column::Categorical { levels, codes } => {
                    let mut used = vec![false; levels.len()];
                    for &c in codes {
                        used[c] = true;
                    }
                    let kept = (1..levels.len()).filter(|&l| used[l]).collect();
                    Coding::Dummies { levels: levels.clone(), reference: 0, kept }
                }
            })
            .collect();
        Self { intercept, names: frame.names().to_vec(), codings }
    }

    pub fn build(&self, frame: &Frame) -> Result<DesignMatrix> {
        let n = frame.nrows();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        let mut blocks = Vec::new();
        if self.intercept {
            cols.push(vec![1.0; n]);
            labels.push("(Intercept)".to_string());
        }
        for (name, coding) in self.names.iter().zip(&self.codings) {
            let col = frame
                .get(name)
                .ok_or_else(|| NrbaError::Data(format!("new data lacks variable `{name}`")))?;
            let start = cols.len();
            match (coding, col) {
                (Coding::Numeric, Column::Numeric(v)) => {
                    cols.push(v.clone());
                    labels.push(name.clone());
                }
                (Coding::Numeric, Column::Categorical { codes, .. }) => {
                    cols.push(codes.iter().map(|&c| c as f64).collect());
                    labels.push(name.clone());
                }
                (Coding::Dummies { levels, kept, .. }, Column::Categorical { levels: new_levels, codes }) => {
                    // Map new-data level labels onto the training levels.
                    let mut map = Vec::with_capacity(new_levels.len());
                    for l in new_levels {
                        map.push(levels.iter().position(|x| x == l));
                    }
                    for &code in codes {
                        if map[code].is_none() {
                            return Err(NrbaError::Data(format!(
                                "unseen level `{}` for variable `{name}`",
                                new_levels[code]
                            )));
                        }
                    }
                    for &lvl in kept {
                        cols.push(codes.iter().map(|&c| f64::from(u8::from(map[c] == Some(lvl)))).collect());
                        labels.push(format!("{name}[{}]", levels[lvl]));
                    }
                }
                (Coding::Dummies { .. }, Column::Numeric(_)) => {
                    return Err(NrbaError::Data(format!("variable `{name}` must be categorical")));
                }
            }
            if cols.len() > start {
                blocks.push(TermBlock { name: name.clone(), cols: start..cols.len() });
            }
        }
        let p = cols.len();
        let x = DMatrix::from_fn(n, p, |i, j| cols[j][i]);
        let mut dm = DesignMatrix::new(x, labels, self.intercept)?;
        dm.blocks = blocks;
        Ok(dm)
    }
}
