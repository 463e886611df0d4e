//! Nonresponse bias analysis for longitudinal panels.
//!
//! The crate covers the full adjustment menu for wave nonresponse:
//! propensity-based attrition weights, sequential multiple imputation with
//! an offset mechanism for MNAR sensitivity analysis, and random-intercept
//! mixed models and GEE for the analysis stage. A cohort simulator supplies
//! data with known truth.

pub mod error;
pub mod frame;
pub mod glm;
pub mod imputation;
pub mod linalg;
pub mod longit;
pub mod panel;
pub mod rng;
pub mod stats;
pub mod weighting;

pub use error::{NrbaError, Result};
