//! Regression kernel: design matrices, maximum-likelihood GLM fits,
//! stepwise selection, propensity trees and AUC.

pub mod auc;
pub mod design;
pub mod fit;
pub mod stepwise;
pub mod tree;

pub use auc::auc;
pub use design::{DesignBuilder, DesignMatrix, TermBlock};
pub use fit::{fit_glm, fit_glm_with, Convergence, Family, GlmFit, GlmOptions};
pub use stepwise::{stepwise_select, Criterion, StepwiseResult};
pub use tree::{fit_propensity_tree, fit_tree, Leaf, Node, PropensityTree, Split, SplitRule, TreeConfig};

use crate::error::Result;
use crate::frame::Frame;

/// A fitted response-propensity model of either kind.
#[derive(Debug, Clone)]
pub enum PropensityModel {
    /// The fit may use a subset of the builder's columns (after collinearity
    /// screening or stepwise selection); prediction selects them by label.
    Glm { fit: GlmFit, builder: DesignBuilder },
    Tree(PropensityTree),
    Cells(crate::weighting::CellModel),
}

impl PropensityModel {
    /// Predicted response probabilities for the rows of `newdata`.
    pub fn predict(&self, newdata: &Frame) -> Result<Vec<f64>> {
        match self {
            PropensityModel::Glm { fit, builder } => fit.predict(&builder.build(newdata)?.select_labels(&fit.design_labels)?),
            PropensityModel::Tree(t) => t.predict(newdata),
            PropensityModel::Cells(c) => c.predict(newdata),
        }
    }
}
