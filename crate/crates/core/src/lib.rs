//! Trust-region method for one-dimensional integer optimal control problems
//! with total-variation regularization,
//!
//! ```text
//! min  F(w) + alpha * TV(w)   s.t.  w(t) in W  a.e.,
//! ```
//!
//! where `W` is a finite set of integers. Each iteration minimizes a linear
//! model of `F` plus the exact TV term over an L1 trust region, which on a
//! uniform grid is solved exactly by dynamic programming
//! ([`subproblem::solve_tr_dp`]). The outer loop ([`driver::run`]) supports
//! two radius policies after a successful step: doubling up to a cap, or
//! resetting to the initial radius.
//!
//! [`benchmarks`] provides a steady heat-equation control problem and a
//! signal deconvolution problem; [`harness`] runs parameter sweeps and writes
//! CSV tables and SVG plots.

pub mod benchmarks;
pub mod control;
pub mod driver;
pub mod error;
pub mod harness;
pub mod subproblem;

pub use control::{Control, Grid, LabelSet, Switch, TheoryDiagnostics};
pub use error::{Error, Result};
