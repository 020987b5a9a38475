//! Outer nonlinear solvers: pruned coordinate-descent Gauss-Newton and the
//! three comparison methods.

mod bfgs;
mod dogleg;
mod pruned;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cdsolve::{CdConfig, StopReason};
use crate::problem::{check_len, Problem};
use crate::{Error, Result};

pub use bfgs::{soft_l1_prior, soft_l1_prior_gradient, solve_bfgs_soft_l1};
pub use dogleg::solve_dogleg;
pub use pruned::solve_pruned_cd;

/// Nonlinear residual below this fraction of the starting residual stops every solver.
pub const CONVERGED_RELATIVE_RESIDUAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dogleg,
    DoglegL2,
    BfgsSoftL1,
    PrunedCd,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Dogleg,
        Method::DoglegL2,
        Method::BfgsSoftL1,
        Method::PrunedCd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dogleg => "dogleg",
            Method::DoglegL2 => "dogleg_l2",
            Method::BfgsSoftL1 => "bfgs_soft_l1",
            Method::PrunedCd => "pruned_cd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_outer_iterations: usize,
    pub prune_threshold: f64,
    pub cd: CdConfig,
    pub l2_lambda: f64,
    pub soft_l1_lambda: f64,
    pub dogleg_initial_radius: f64,
    /// Starting point; zeros when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_x: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::PrunedCd,
            max_outer_iterations: 10,
            prune_threshold: crate::pruning::DEFAULT_PRUNE_THRESHOLD,
            cd: CdConfig::default(),
            l2_lambda: 3600.0,
            soft_l1_lambda: 3600.0,
            dogleg_initial_radius: 1.0,
            initial_x: None,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 {
            return Err(Error::config("max_outer_iterations must be positive"));
        }
        if !(0.0..=1.0).contains(&self.prune_threshold) {
            return Err(Error::config(format!(
                "prune_threshold must lie in [0, 1], got {}",
                self.prune_threshold
            )));
        }
        if !(self.l2_lambda >= 0.0) || !(self.soft_l1_lambda >= 0.0) {
            return Err(Error::config("regularization weights must be non-negative"));
        }
        if !(self.dogleg_initial_radius > 0.0) {
            return Err(Error::config("dogleg_initial_radius must be positive"));
        }
        self.cd.validate()
    }

    pub(crate) fn start<P: Problem + ?Sized>(&self, problem: &P) -> Result<DVector<f64>> {
        self.validate()?;
        let n = problem.parameter_count();
        match &self.initial_x {
            Some(x) => {
                check_len("initial_x", n, x.len())?;
                Ok(DVector::from_column_slice(x))
            }
            None => Ok(DVector::zeros(n)),
        }
    }
}

/// State before an outer iteration (and once more after the last one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub x: Vec<f64>,
    /// `||f(x)||_2`.
    pub residual_norm: f64,
    /// The value the method minimizes (includes any prior term).
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub step_norm: f64,
    pub accepted: bool,
    /// Coordinate-descent stop reason (pruned CD only).
    pub inner_stop: Option<StopReason>,
    pub kept_columns: Option<usize>,
    pub unique_coordinates: usize,
    /// Trust radius after the update (dogleg only).
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    MaxIterations,
    Converged,
    ZeroStep,
    Stationary,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub method: Method,
    pub snapshots: Vec<Snapshot>,
    pub iterations: Vec<IterationRecord>,
    pub final_x: Vec<f64>,
    pub final_residual_norm: f64,
    pub termination: Termination,
    pub residual_evaluations: usize,
    pub jacobian_evaluations: usize,
    pub wall_time: Duration,
}

impl SolveTrace {
    /// Number of outer iterations actually run.
    pub fn outer_iterations(&self) -> usize {
        self.iterations.len()
    }

    /// Sum of per-iteration unique coordinates.
    pub fn unique_coordinates(&self) -> usize {
        self.iterations.iter().map(|r| r.unique_coordinates).sum()
    }

    /// Residual norms before each outer iteration, plus the final one.
    pub fn residual_history(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.residual_norm).collect()
    }

    /// Equality ignoring wall time.
    pub fn same_path(&self, other: &SolveTrace) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        a == *other
    }
}

pub(crate) struct TraceBuilder {
    method: Method,
    snapshots: Vec<Snapshot>,
    iterations: Vec<IterationRecord>,
    residual_evaluations: usize,
    jacobian_evaluations: usize,
    started: std::time::Instant,
}

impl TraceBuilder {
    pub(crate) fn new(method: Method) -> Self {
        Self {
            method,
            snapshots: Vec::new(),
            iterations: Vec::new(),
            residual_evaluations: 0,
            jacobian_evaluations: 0,
            started: std::time::Instant::now(),
        }
    }

    pub(crate) fn evaluate<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.residual_evaluations += 1;
        let f = crate::problem::checked_evaluate(problem, x)?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "residual evaluation".into(),
            });
        }
        Ok(f)
    }

    pub(crate) fn jacobian<P: Problem + ?Sized>(
        &mut self,
        problem: &P,
        x: &DVector<f64>,
    ) -> Result<nalgebra::DMatrix<f64>> {
        self.jacobian_evaluations += 1;
        let j = crate::problem::checked_jacobian(problem, x)?;
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "jacobian evaluation".into(),
            });
        }
        Ok(j)
    }

    pub(crate) fn snapshot(&mut self, x: &DVector<f64>, residual_norm: f64, objective: f64) {
        self.snapshots.push(Snapshot {
            x: x.as_slice().to_vec(),
            residual_norm,
            objective,
        });
    }

    pub(crate) fn record(&mut self, rec: IterationRecord) {
        self.iterations.push(rec);
    }

    pub(crate) fn finish(
        self,
        x: &DVector<f64>,
        residual_norm: f64,
        termination: Termination,
    ) -> SolveTrace {
        SolveTrace {
            method: self.method,
            snapshots: self.snapshots,
            iterations: self.iterations,
            final_x: x.as_slice().to_vec(),
            final_residual_norm: residual_norm,
            termination,
            residual_evaluations: self.residual_evaluations,
            jacobian_evaluations: self.jacobian_evaluations,
            wall_time: self.started.elapsed(),
        }
    }
}

/// Dispatches on `config.method`.
pub fn solve<P: Problem + ?Sized>(problem: &P, config: &SolverConfig) -> Result<SolveTrace> {
    match config.method {
        Method::PrunedCd => solve_pruned_cd(problem, config),
        Method::Dogleg | Method::DoglegL2 => solve_dogleg(problem, config),
        Method::BfgsSoftL1 => solve_bfgs_soft_l1(problem, config),
    }
}
