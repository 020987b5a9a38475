//! Sparse Gauss-Newton search for nonlinear least squares.
//!
//! Each outer iteration linearizes `f(x)`, drops Jacobian columns whose
//! direction is poorly correlated with the residual, and then takes a few
//! coordinate-descent steps on the surviving columns instead of solving the
//! full normal equations. The result stays sparse without adding any
//! regularization term to the objective.
//!
//! The crate also ships the comparison solvers (Powell dogleg, dogleg with an
//! L2 prior, BFGS with a soft-L1 prior), a synthetic blendshape curve-matching
//! problem generator, and the weight/sparsity metrics used to compare them.
//!
//! ```
//! use sparse_gn::solvers::{solve, SolverConfig};
//! use sparse_gn::synth::{motivating_system, MotivatingCase};
//!
//! let system = motivating_system(MotivatingCase::B51);
//! let problem = system.problem();
//! let trace = solve(&problem, &SolverConfig::default()).unwrap();
//! assert_eq!(trace.final_x.len(), 2);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cdsolve;
mod error;
pub mod metrics;
pub mod par;
pub mod problem;
pub mod pruning;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
pub use problem::{finite_diff_jacobian, linearize, LinearProblem, LinearSubproblem, Problem};
