//! Galton–Watson trees, their branching measure, and exact Hausdorff gauges
//! of the tree boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod exec;
pub mod gauge;
pub mod gwtree;
pub mod mc;
pub mod numeric;
pub mod pgf;
pub mod spine;
pub mod tails;

pub use error::{Error, Result};
pub use exec::Execution;
pub use pgf::{Extended, LawSpec, OffspringLaw};

/// Version string recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
