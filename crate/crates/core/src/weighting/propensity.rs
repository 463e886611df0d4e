use serde::{Deserialize, Serialize};

use crate::error::{NrbaError, Result};
use crate::frame::{Column, Frame};
use crate::glm::{
    auc, fit_glm, fit_propensity_tree, stepwise_select, Criterion, DesignBuilder, Family, PropensityModel,
    TreeConfig,
};
use crate::panel::{PanelDataset, VarRef};

/// Name of the base-weight column added to propensity frames.
pub const BASE_WEIGHT_COLUMN: &str = "base_weight";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum PropensityMethod {
    /// Main-effects logistic regression on every candidate.
    Logistic,
    /// Bidirectional stepwise logistic regression.
    Stepwise {
        #[serde(default)]
        criterion: Criterion,
    },
    Tree {
        #[serde(default)]
        config: TreeConfig,
    },
    /// Weighting classes: base-weighted response rate within the cells
    /// formed by the listed categorical variables.
    Cells { variables: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensitySpec {
    #[serde(flatten)]
    pub method: PropensityMethod,
    /// Propensities are clipped to `[lo, hi]` before inversion.
    #[serde(default = "default_bounds")]
    pub bounds: [f64; 2],
    /// Offer the base weight as a candidate predictor.
    #[serde(default = "default_true")]
    pub include_base_weight: bool,
    /// Restrict candidates to these variable names (all waves); `None`
    /// means every available variable.
    #[serde(default)]
    pub predictors: Option<Vec<String>>,
}

fn default_bounds() -> [f64; 2] {
    [0.02, 0.98]
}

fn default_true() -> bool {
    true
}

impl Default for PropensitySpec {
    fn default() -> Self {
        Self {
            method: PropensityMethod::Stepwise { criterion: Criterion::Aic },
            bounds: default_bounds(),
            include_base_weight: true,
            predictors: None,
        }
    }
}

impl PropensitySpec {
    pub fn with_method(method: PropensityMethod) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bounds;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(NrbaError::Config(format!("propensity bounds must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// A fitted response-propensity model.
#[derive(Debug, Clone)]
pub struct PropensityFit {
    /// `None` when every unit responded and no model was needed.
    pub model: Option<PropensityModel>,
    /// Unclipped predicted probabilities on the fitting set.
    pub fitted: Vec<f64>,
    /// In-sample AUC; `None` when only one class was present.
    pub auc: Option<f64>,
    /// Design columns or tree variables the model uses.
    pub terms: Vec<String>,
    pub dropped_collinear: Vec<String>,
}

/// Model frame for a propensity fit: the requested history plus the base
/// weight when asked for.
pub fn propensity_frame(data: &PanelDataset, refs: &[VarRef], units: &[usize], spec: &PropensitySpec) -> Result<Frame> {
    let refs: Vec<VarRef> = match &spec.predictors {
        None => refs.to_vec(),
        Some(names) => {
            for n in names {
                data.var(n)?;
            }
            refs.iter().copied().filter(|r| names.iter().any(|n| n == data.name(r.var))).collect()
        }
    };
    let mut frame = data.frame(&refs, units)?;
    if spec.include_base_weight {
        frame.push(BASE_WEIGHT_COLUMN, data.base_weight_column(units))?;
    }
    Ok(frame)
}

/// Fit `P(response = 1 | frame)` with the configured method.
pub fn fit_propensity(frame: &Frame, response: &[f64], weights: &[f64], spec: &PropensitySpec) -> Result<PropensityFit> {
    let n = frame.nrows();
    if response.len() != n || weights.len() != n {
        return Err(NrbaError::Data("propensity inputs differ in length".into()));
    }
    if n == 0 {
        return Err(NrbaError::Data("empty propensity fitting set".into()));
    }
    let events: f64 = response.iter().sum();
    if events == n as f64 {
        return Ok(PropensityFit { model: None, fitted: vec![1.0; n], auc: None, terms: Vec::new(), dropped_collinear: Vec::new() });
    }
    if events == 0.0 {
        return Err(NrbaError::Data("empty respondent set".into()));
    }
    let (model, terms, dropped) = match &spec.method {
        PropensityMethod::Logistic | PropensityMethod::Stepwise { .. } => {
            let builder = DesignBuilder::learn(frame, true);
            let (design, dropped) = builder.build(frame)?.drop_collinear(None);
            if !dropped.is_empty() {
                log::warn!("propensity model: dropped collinear columns {}", dropped.join(", "));
            }
            let fit = match &spec.method {
                PropensityMethod::Stepwise { criterion } => {
                    let scope: Vec<usize> = (0..design.blocks.len()).collect();
                    stepwise_select(&design, response, Family::Binomial, None, &[], &scope, *criterion)?.fit
                }
                _ => fit_glm(&design, response, Family::Binomial, None)?,
            };
            let terms = fit.design_labels.clone();
            (PropensityModel::Glm { fit, builder }, terms, dropped)
        }
        PropensityMethod::Tree { config } => {
            let tree = fit_propensity_tree(frame, response, config)?;
            let mut terms: Vec<String> = Vec::new();
            collect_tree_vars(&tree.root, &tree.var_names, &mut terms);
            (PropensityModel::Tree(tree), terms, Vec::new())
        }
        PropensityMethod::Cells { variables } => {
            let cells = CellModel::fit(frame, response, weights, variables)?;
            (PropensityModel::Cells(cells), variables.clone(), Vec::new())
        }
    };
    let fitted = model.predict(frame)?;
    let auc = auc(&fitted, response).ok();
    Ok(PropensityFit { model: Some(model), fitted, auc, terms, dropped_collinear: dropped })
}

fn collect_tree_vars(node: &crate::glm::Node, names: &[String], out: &mut Vec<String>) {
    if let crate::glm::Node::Internal { var, left, right, .. } = node {
        if !out.contains(&names[*var]) {
            out.push(names[*var].clone());
        }
        collect_tree_vars(left, names, out);
        collect_tree_vars(right, names, out);
    }
}

/// Weighting-class propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellModel {
    pub variables: Vec<String>,
    /// Cell key (level labels joined by `|`) and response rate.
    pub rates: Vec<(String, f64)>,
}

impl CellModel {
    fn key(frame: &Frame, variables: &[String], i: usize) -> Result<String> {
        let mut parts = Vec::with_capacity(variables.len());
        for v in variables {
            match frame.get(v) {
                Some(Column::Categorical { levels, codes }) => parts.push(levels[codes[i]].clone()),
                Some(Column::Numeric(x)) => parts.push(format!("{}", x[i])),
                None => return Err(NrbaError::Data(format!("cell variable `{v}` is not available"))),
            }
        }
        Ok(parts.join("|"))
    }

    pub fn fit(frame: &Frame, response: &[f64], weights: &[f64], variables: &[String]) -> Result<Self> {
        let mut acc: std::collections::BTreeMap<String, (f64, f64)> = Default::default();
        for i in 0..frame.nrows() {
            let e = acc.entry(Self::key(frame, variables, i)?).or_default();
            e.0 += weights[i] * response[i];
            e.1 += weights[i];
        }
        Ok(CellModel { variables: variables.to_vec(), rates: acc.into_iter().map(|(k, (r, w))| (k, r / w)).collect() })
    }

    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        (0..frame.nrows())
            .map(|i| {
                let k = Self::key(frame, &self.variables, i)?;
                self.rates
                    .iter()
                    .find(|(c, _)| *c == k)
                    .map(|(_, r)| *r)
                    .ok_or_else(|| NrbaError::Data(format!("weighting cell `{k}` was empty when fitted")))
            })
            .collect()
    }
}
