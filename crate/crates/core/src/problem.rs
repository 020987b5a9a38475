//! Nonlinear least-squares problems and their Gauss-Newton linearization.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A residual map `f: R^n -> R^m` with an analytic Jacobian.
///
/// Solvers minimize `||f(x)||^2`. Implementations must be free of interior
/// mutability so that distinct points can be evaluated from several threads.
pub trait Problem {
    fn parameter_count(&self) -> usize;
    fn residual_count(&self) -> usize;
    fn evaluate(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `residual_count x parameter_count` matrix of partial derivatives.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

impl<P: Problem + ?Sized> Problem for &P {
    fn parameter_count(&self) -> usize {
        (**self).parameter_count()
    }
    fn residual_count(&self) -> usize {
        (**self).residual_count()
    }
    fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        (**self).evaluate(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (**self).jacobian(x)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected,
            got,
        })
    }
}

/// Evaluates `f(x)` and verifies both the input and output shapes.
pub fn checked_evaluate<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("parameter vector", problem.parameter_count(), x.len())?;
    let f = problem.evaluate(x);
    check_len("residual vector", problem.residual_count(), f.len())?;
    Ok(f)
}

pub fn checked_jacobian<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_len("parameter vector", problem.parameter_count(), x.len())?;
    let j = problem.jacobian(x);
    check_len("jacobian rows", problem.residual_count(), j.nrows())?;
    check_len("jacobian columns", problem.parameter_count(), j.ncols())?;
    Ok(j)
}

/// One Gauss-Newton linearization: solve `jacobian * dx ~= rhs` around `base_point`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSubproblem {
    pub jacobian: DMatrix<f64>,
    /// Negated residual `-f(base_point)`.
    pub rhs: DVector<f64>,
    pub base_point: DVector<f64>,
}

impl LinearSubproblem {
    pub fn column_count(&self) -> usize {
        self.jacobian.ncols()
    }
}

/// Linearizes `problem` at `x`.
pub fn linearize<P: Problem + ?Sized>(problem: &P, x: &DVector<f64>) -> Result<LinearSubproblem> {
    let f = checked_evaluate(problem, x)?;
    let jacobian = checked_jacobian(problem, x)?;
    Ok(LinearSubproblem {
        jacobian,
        rhs: -f,
        base_point: x.clone(),
    })
}

/// Central-difference Jacobian, column by column. Used as a test oracle.
pub fn finite_diff_jacobian<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    check_len("parameter vector", problem.parameter_count(), x.len())?;
    let m = problem.residual_count();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = checked_evaluate(problem, &probe)?;
        probe[i] = x[i] - h;
        let minus = checked_evaluate(problem, &probe)?;
        probe[i] = x[i];
        jac.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// Relative Frobenius error `||analytic - fd|| / max(||fd||, tiny)`.
pub fn jacobian_relative_error<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let analytic = checked_jacobian(problem, x)?;
    let numeric = finite_diff_jacobian(problem, x, h)?;
    let scale = numeric.norm().max(f64::MIN_POSITIVE);
    Ok((analytic - numeric).norm() / scale)
}

/// `f(x) = A x - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProblem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl LinearProblem {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self> {
        check_len("linear problem rhs", matrix.nrows(), rhs.len())?;
        if matrix.ncols() == 0 || matrix.nrows() == 0 {
            return Err(Error::config(
                "linear problem needs at least one row and column",
            ));
        }
        Ok(Self { matrix, rhs })
    }
}

impl Problem for LinearProblem {
    fn parameter_count(&self) -> usize {
        self.matrix.ncols()
    }
    fn residual_count(&self) -> usize {
        self.matrix.nrows()
    }
    fn evaluate(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x - &self.rhs
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
}
