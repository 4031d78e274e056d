//! Outlier-robust Wasserstein distances between discrete measures.
//!
//! `W_p^ε(μ, ν)` is the smallest p-Wasserstein distance between sub-measures
//! μ′ ≤ μ and ν′ ≤ ν of mass 1 − ε. The crate computes it exactly by min-cost
//! flow, through its penalized Kantorovich dual, and approximately by entropic
//! regularization, and builds robust estimators and tests on top.

pub mod dual;
pub mod error;
pub mod estimation;
pub mod exact;
mod flow;
pub mod io;
pub mod measures;
pub mod sinkhorn;
pub mod sliced;
#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use exact::{RobustProblem, TransportSolution};
pub use measures::{DiscreteMeasure, GroundCost, Metric};
