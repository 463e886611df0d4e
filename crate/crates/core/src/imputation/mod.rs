//! Sequential multiple imputation, offset sensitivity analysis and pooling.

pub mod chained;
pub mod draw;
pub mod pool;
pub mod sequential;
pub mod spec;

pub use chained::{fill_intermittent, impute_item_nonresponse};
pub use draw::{donor_sets, pmm_draw};
pub use pool::{pool, PooledEstimate};
pub use sequential::{apply_offset, sequential_mi, ImputationManifest, ImputationSet, SigmaRecord, MIN_GROUP_SIZE};
pub use spec::{ImputeMethod, ImputerSpec};
