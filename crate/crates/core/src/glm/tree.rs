//! Recursive binary partitioning for response propensities (binary
//! response) and for donor-based imputation (numeric response).
//!
//! Two split rules are offered. `Conditional` screens every predictor with
//! an association test whose statistic is `(n - 1) R^2`, asymptotically
//! chi-square with `levels - 1` (categorical) or 1 (numeric) degrees of
//! freedom, Bonferroni-adjusts across predictors and stops when the best
//! adjusted p-value exceeds `alpha`. `Cart` picks the split with the
//! largest impurity decrease and stops below a complexity threshold.
//! For a 0/1 response the within-node sum of squares is proportional to
//! Gini impurity, so one split criterion serves both response types.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{NrbaError, Result};
use crate::frame::{Column, Frame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Conditional { alpha: f64 },
    Cart { cp: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub min_leaf: usize,
    pub max_depth: usize,
    pub rule: SplitRule,
    /// Leaf rate smoothing `(events + a) / (n + 2a)` for binary responses.
    pub smoothing: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { min_leaf: 7, max_depth: 6, rule: SplitRule::Conditional { alpha: 0.05 }, smoothing: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Split {
    /// `x <= threshold` goes left.
    Numeric { threshold: f64 },
    /// Listed levels go left.
    Categorical { left: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub n: usize,
    pub sum: f64,
    /// Smoothed event rate (binary) or mean (numeric).
    pub value: f64,
    /// Training row indices routed to this leaf.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(Leaf),
    Internal {
        var: usize,
        split: Split,
        /// Adjusted p-value of the selecting test (conditional rule only).
        p_value: Option<f64>,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityTree {
    pub root: Node,
    pub var_names: Vec<String>,
    /// Declared levels for categorical predictors.
    pub var_levels: Vec<Option<Vec<String>>>,
    pub config: TreeConfig,
    pub binary: bool,
    /// Why the growth stopped at each leaf, in leaf order.
    pub stop_reasons: Vec<String>,
}

impl PropensityTree {
    pub fn leaves(&self) -> Vec<&Leaf> {
        fn walk<'a>(n: &'a Node, out: &mut Vec<&'a Leaf>) {
            match n {
                Node::Leaf(l) => out.push(l),
                Node::Internal { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    fn row_values(&self, frame: &Frame) -> Result<Vec<RowValue>> {
        let mut cols = Vec::with_capacity(self.var_names.len());
        for (name, levels) in self.var_names.iter().zip(&self.var_levels) {
            let col = frame
                .get(name)
                .ok_or_else(|| NrbaError::Data(format!("new data lacks variable `{name}`")))?;
            cols.push(match (col, levels) {
                (Column::Numeric(v), None) => RowValue::Num(v.clone()),
                (Column::Categorical { levels: nl, codes }, Some(train)) => {
                    let mut mapped = Vec::with_capacity(codes.len());
                    for &c in codes {
                        let label = &nl[c];
                        if !train.contains(label) {
                            return Err(NrbaError::Data(format!("unseen level `{label}` for variable `{name}`")));
                        }
                        mapped.push(label.clone());
                    }
                    RowValue::Cat(mapped)
                }
                _ => return Err(NrbaError::Data(format!("variable `{name}` has the wrong type"))),
            });
        }
        Ok(cols)
    }

    /// Leaf reached by each row of `frame`.
    pub fn route(&self, frame: &Frame) -> Result<Vec<&Leaf>> {
        let cols = self.row_values(frame)?;
        let mut out = Vec::with_capacity(frame.nrows());
        for i in 0..frame.nrows() {
            let mut node = &self.root;
            loop {
                match node {
                    Node::Leaf(l) => {
                        out.push(l);
                        break;
                    }
                    Node::Internal { var, split, left, right, .. } => {
                        let go_left = match (split, &cols[*var]) {
                            (Split::Numeric { threshold }, RowValue::Num(v)) => v[i] <= *threshold,
                            (Split::Categorical { left }, RowValue::Cat(v)) => left.contains(&v[i]),
                            _ => unreachable!("split type matches column type"),
                        };
                        node = if go_left { left } else { right };
                    }
                }
            }
        }
        Ok(out)
    }

    /// Leaf value for each row: smoothed propensity or node mean.
    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        Ok(self.route(frame)?.into_iter().map(|l| l.value).collect())
    }
}

enum RowValue {
    Num(Vec<f64>),
    Cat(Vec<String>),
}

struct Grower<'a> {
    frame: &'a Frame,
    y: &'a [f64],
    config: TreeConfig,
    binary: bool,
    root_sse: f64,
    reasons: Vec<String>,
}

struct Candidate {
    var: usize,
    split: Split,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn sse(y: &[f64], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let s: f64 = rows.iter().map(|&r| y[r]).sum();
    rows.iter().map(|&r| y[r] * y[r]).sum::<f64>() - s * s / n
}

impl Grower<'_> {
    fn leaf(&mut self, rows: Vec<usize>, reason: &str) -> Node {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let value = if self.binary {
            let a = self.config.smoothing;
            (sum + a) / (n as f64 + 2.0 * a)
        } else {
            sum / n as f64
        };
        self.reasons.push(reason.to_string());
        Node::Leaf(Leaf { n, sum, value, rows })
    }

    /// Association p-value between predictor `var` and the response on `rows`.
    fn p_value(&self, var: usize, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        let ybar = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n;
        let syy: f64 = rows.iter().map(|&r| (self.y[r] - ybar).powi(2)).sum();
        if syy <= 0.0 {
            return 1.0;
        }
        let (r2, df) = match &self.frame.columns()[var] {
            Column::Numeric(x) => {
                let xbar = rows.iter().map(|&r| x[r]).sum::<f64>() / n;
                let sxx: f64 = rows.iter().map(|&r| (x[r] - xbar).powi(2)).sum();
                if sxx <= 0.0 {
                    return 1.0;
                }
                let sxy: f64 = rows.iter().map(|&r| (x[r] - xbar) * (self.y[r] - ybar)).sum();
                (sxy * sxy / (sxx * syy), 1.0)
            }
            Column::Categorical { levels, codes } => {
                let mut cnt = vec![0.0; levels.len()];
                let mut sum = vec![0.0; levels.len()];
                for &r in rows {
                    cnt[codes[r]] += 1.0;
                    sum[codes[r]] += self.y[r];
                }
                let present = cnt.iter().filter(|&&c| c > 0.0).count();
                if present < 2 {
                    return 1.0;
                }
                let ssb: f64 = (0..levels.len())
                    .filter(|&l| cnt[l] > 0.0)
                    .map(|l| cnt[l] * (sum[l] / cnt[l] - ybar).powi(2))
                    .sum();
                (ssb / syy, (present - 1) as f64)
            }
        };
        let stat = (n - 1.0) * r2.min(1.0);
        ChiSquared::new(df).map(|d| d.sf(stat)).unwrap_or(1.0)
    }

    fn best_split(&self, var: usize, rows: &[usize]) -> Option<Candidate> {
        let min_leaf = self.config.min_leaf.max(1);
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let n = rows.len() as f64;
        let gain_of = |sl: f64, nl: f64| {
            let sr = total - sl;
            let nr = n - nl;
            sl * sl / nl + sr * sr / nr - total * total / n
        };
        match &self.frame.columns()[var] {
            Column::Numeric(x) => {
                let mut sorted = rows.to_vec();
                sorted.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
                let mut best: Option<(f64, usize)> = None;
                let mut sl = 0.0;
                for k in 0..sorted.len() - 1 {
                    sl += self.y[sorted[k]];
                    let nl = k + 1;
                    if nl < min_leaf || sorted.len() - nl < min_leaf {
                        continue;
                    }
                    if x[sorted[k]] == x[sorted[k + 1]] {
                        continue;
                    }
                    let g = gain_of(sl, nl as f64);
                    if best.is_none_or(|(bg, _)| g > bg + 1e-12) {
                        best = Some((g, k));
                    }
                }
                let (gain, k) = best?;
                let threshold = 0.5 * (x[sorted[k]] + x[sorted[k + 1]]);
                let (left, right) = rows.iter().partition(|&&r| x[r] <= threshold);
                Some(Candidate { var, split: Split::Numeric { threshold }, gain, left, right })
            }
            Column::Categorical { levels, codes } => {
                let mut cnt = vec![0usize; levels.len()];
                let mut sum = vec![0.0; levels.len()];
                for &r in rows {
                    cnt[codes[r]] += 1;
                    sum[codes[r]] += self.y[r];
                }
                let mut present: Vec<usize> = (0..levels.len()).filter(|&l| cnt[l] > 0).collect();
                if present.len() < 2 {
                    return None;
                }
                present.sort_by(|&a, &b| {
                    (sum[a] / cnt[a] as f64).total_cmp(&(sum[b] / cnt[b] as f64)).then(a.cmp(&b))
                });
                let mut best: Option<(f64, usize)> = None;
                let (mut sl, mut nl) = (0.0, 0usize);
                for k in 0..present.len() - 1 {
                    sl += sum[present[k]];
                    nl += cnt[present[k]];
                    if nl < min_leaf || rows.len() - nl < min_leaf {
                        continue;
                    }
                    let g = gain_of(sl, nl as f64);
                    if best.is_none_or(|(bg, _)| g > bg + 1e-12) {
                        best = Some((g, k));
                    }
                }
                let (gain, k) = best?;
                let left_codes: Vec<usize> = present[..=k].to_vec();
                let mut left_labels: Vec<String> = left_codes.iter().map(|&c| levels[c].clone()).collect();
                left_labels.sort();
                let (left, right) = rows.iter().partition(|&&r| left_codes.contains(&codes[r]));
                Some(Candidate { var, split: Split::Categorical { left: left_labels }, gain, left, right })
            }
        }
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> Node {
        if depth >= self.config.max_depth {
            return self.leaf(rows, "max depth");
        }
        if rows.len() < 2 * self.config.min_leaf.max(1) {
            return self.leaf(rows, "min leaf");
        }
        if sse(self.y, &rows) <= 1e-12 {
            return self.leaf(rows, "pure node");
        }
        let nvars = self.frame.ncols();
        let chosen = match self.config.rule {
            SplitRule::Conditional { alpha } => {
                let mut best: Option<(f64, usize)> = None;
                for v in 0..nvars {
                    let p = self.p_value(v, &rows);
                    if best.is_none_or(|(bp, _)| p < bp) {
                        best = Some((p, v));
                    }
                }
                let Some((p, v)) = best else {
                    return self.leaf(rows, "no predictors");
                };
                let adjusted = (p * nvars as f64).min(1.0);
                if adjusted > alpha {
                    return self.leaf(rows, &format!("adjusted p {adjusted:.4} > {alpha}"));
                }
                self.best_split(v, &rows).map(|c| (c, Some(adjusted)))
            }
            SplitRule::Cart { cp } => {
                let mut best: Option<Candidate> = None;
                for v in 0..nvars {
                    if let Some(c) = self.best_split(v, &rows) {
                        if best.as_ref().is_none_or(|b| c.gain > b.gain + 1e-12) {
                            best = Some(c);
                        }
                    }
                }
                match best {
                    Some(c) if c.gain / self.root_sse >= cp => Some((c, None)),
                    Some(_) => return self.leaf(rows, &format!("improvement below cp {cp}")),
                    None => None,
                }
            }
        };
        let Some((cand, p_value)) = chosen else {
            return self.leaf(rows, "no admissible split");
        };
        let left = Box::new(self.grow(cand.left, depth + 1));
        let right = Box::new(self.grow(cand.right, depth + 1));
        Node::Internal { var: cand.var, split: cand.split, p_value, left, right }
    }
}

/// Grow a tree for `response` (0/1 when `binary`) on the predictors in `frame`.
pub fn fit_tree(frame: &Frame, response: &[f64], binary: bool, config: &TreeConfig) -> Result<PropensityTree> {
    let n = frame.nrows();
    if response.len() != n {
        return Err(NrbaError::Data(format!("{} responses for {n} rows", response.len())));
    }
    if n == 0 {
        return Err(NrbaError::Data("no observations".into()));
    }
    if binary && response.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(NrbaError::Data("tree response must be 0/1".into()));
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(NrbaError::Data("tree response has missing values".into()));
    }
    for (name, col) in frame.names().iter().zip(frame.columns()) {
        if let Column::Numeric(v) = col {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NrbaError::Data(format!("predictor `{name}` has missing values")));
            }
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let mut grower = Grower {
        frame,
        y: response,
        config: *config,
        binary,
        root_sse: sse(response, &all).max(1e-300),
        reasons: Vec::new(),
    };
    let root = grower.grow(all, 0);
    let var_levels = frame
        .columns()
        .iter()
        .map(|c| match c {
            Column::Numeric(_) => None,
            Column::Categorical { levels, .. } => Some(levels.clone()),
        })
        .collect();
    Ok(PropensityTree {
        root,
        var_names: frame.names().to_vec(),
        var_levels,
        config: *config,
        binary,
        stop_reasons: grower.reasons,
    })
}

/// Binary-response convenience wrapper.
pub fn fit_propensity_tree(frame: &Frame, response: &[f64], config: &TreeConfig) -> Result<PropensityTree> {
    fit_tree(frame, response, true, config)
}
