//! Longitudinal analysis models and the method comparison table.

pub mod design;
pub mod formula;
pub mod gee;
pub mod mixed;
pub mod table;

pub use design::{aca_rows, all_rows, build_design, cca_rows, LongDesign, LongRow};
pub use formula::{AnalysisFormula, Term};
pub use gee::{fit_gee, GeeFit, GeeOptions, WorkingCorrelation};
pub use mixed::{fit_mixed, MixedFit, MixedOptions, VarianceMethod};
pub use table::{estimate_table, EstimateRow, EstimateTable, EstimationInputs, MethodTag, WeightBundle, FIXED_TAGS};
