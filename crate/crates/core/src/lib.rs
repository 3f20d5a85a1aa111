//! Exact discrete Wasserstein barycenters for measures in general position.
//!
//! The barycenter LP has one variable per combination of support points, one
//! from each input measure, so its column count is the product of the support
//! sizes. This crate never stores that constraint matrix. Columns are generated
//! from per-measure strides ([`model::Strides`]), and the LP is solved by
//! Dantzig-Wolfe column generation:
//!
//! * the constraints of two measures form a pricing problem that compresses to
//!   a classical transportation problem over the unique columns ([`pricing`],
//!   [`transport`]);
//! * the remaining constraints and a convexity row form a small restricted
//!   master problem solved by a warm-started dense simplex ([`master`],
//!   [`simplex`]);
//! * the first column is a vertex built greedily or from a 2-approximation
//!   ([`init`]).
//!
//! [`driver::solve`] runs the loop. [`oracle::solve_direct`] solves the full LP
//! explicitly and is used to verify small instances.
//!
//! The `parallel` feature (on by default) splits the reduced-cost update and
//! the best-cost compression across rayon workers. Without it, or with
//! [`exec::Execution::Sequential`], the same code runs on one thread and gives
//! bit-identical results.

pub mod cli;
pub mod driver;
pub mod error;
pub mod exec;
pub mod init;
pub mod master;
pub mod model;
pub mod oracle;
pub mod pricing;
pub mod simplex;
pub mod transport;

pub use driver::{solve, PairVariant, SolveConfig, SolveResult, StartStrategy};
pub use error::{Error, Result};
pub use model::{Combination, DiscreteMeasure, Instance, SparseMass, Strides};
pub use oracle::solve_direct;
