//! Exact and divergence-regularized optimal transport on discrete measures,
//! together with the quantization, shadow and duality tools used to bracket
//! the regularization gap `OT_{f,eps} - OT` as `eps -> 0`.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `otrate` crate.

#![no_std]
// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod bounds;
pub mod cost;
pub mod divergence;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod math;
pub mod measure;
pub mod quantize;
pub mod regularized;
pub mod shadow;

pub use cost::{CostModel, CostTag};
pub use divergence::{eval_divergence, CapMode, DivergenceTag, Extended, FDivergence};
pub use error::{Error, Result};
pub use exact::{reduced_cost, solve_exact_ot, wasserstein_p, ExactSolution, Potentials};
pub use measure::{product_measure, Coupling, DiscreteMeasure, Point};
pub use regularized::{gap, solve_entropic, solve_f_dual, solve_regularized, RegSolution, SolverOptions};
