//! Attrition weights, weight diagnostics and weighted estimation.

pub mod diagnostics;
pub mod propensity;
pub mod variance;
pub mod weights;

pub use diagnostics::{weight_diagnostics, write_diagnostics_csv, write_quintiles_csv, QuintileSummary, WeightDiagnostics};
pub use propensity::{fit_propensity, propensity_frame, CellModel, PropensityFit, PropensityMethod, PropensitySpec, BASE_WEIGHT_COLUMN};
pub use variance::{bootstrap_se, bootstrap_se_indices, weighted_mean, WeightedMean};
pub use weights::{
    base_weight_set, baseline_weights, cca_weights, read_weights_csv, sequential_weights, trim_weights,
    write_weights_csv, Provenance, TrimRecord, WeightRecord, WeightSet,
};
