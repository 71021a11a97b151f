#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod asymptotics;
pub mod error;
pub mod laplace;
pub mod levy;
pub mod offspring;
pub mod quad;
pub mod scale;
pub mod sim;
pub mod solver;
pub mod window;

pub use error::{Error, Result};
pub use levy::{DriftRegime, LevyModel, PhiSolution, Variant};

/// Crate version, recorded in artifact manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
