//! Longitudinal data model, response patterns and the cohort simulator.

pub mod dataset;
pub mod load;
pub mod pattern;
pub mod schema;
pub mod simulate;

pub use dataset::{PanelDataset, VarRef};
pub use load::{load_panel, load_panel_from_reader, load_panel_str};
pub use pattern::{monotonize, summarize_patterns, GroupRates, ItemRate, MonotoneMode, MonotonizeReport, PatternSummary};
pub use schema::{Role, Schema, VarKind, VariableSpec};
pub use simulate::{simulate_cohort, CohortScenario, DropoutMechanism, HazardModel, TruthRecord};
