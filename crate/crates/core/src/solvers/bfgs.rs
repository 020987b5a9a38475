//! BFGS with Armijo backtracking on `||f||^2 + lambda * sum 2(sqrt(1 + x^2) - 1)`.

use nalgebra::{DMatrix, DVector};

use super::{
    IterationRecord, SolveTrace, SolverConfig, Termination, TraceBuilder,
    CONVERGED_RELATIVE_RESIDUAL,
};
use crate::problem::Problem;
use crate::Result;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Soft-L1 (Charbonnier) prior `sum_i 2 (sqrt(1 + x_i^2) - 1)`, unweighted.
pub fn soft_l1_prior(x: &DVector<f64>) -> f64 {
    x.iter().map(|v| 2.0 * ((1.0 + v * v).sqrt() - 1.0)).sum()
}

/// Gradient of [`soft_l1_prior`]: `2 x / sqrt(1 + x^2)` elementwise.
pub fn soft_l1_prior_gradient(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| 2.0 * v / (1.0 + v * v).sqrt())
}

struct Point {
    x: DVector<f64>,
    f: DVector<f64>,
    value: f64,
    gradient: DVector<f64>,
}

pub fn solve_bfgs_soft_l1<P: Problem + ?Sized>(
    problem: &P,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    let x0 = config.start(problem)?;
    let lambda = config.soft_l1_lambda;
    let mut trace = TraceBuilder::new(config.method);
    let n = x0.len();

    let value_at = |trace: &mut TraceBuilder, x: &DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let f = trace.evaluate(problem, x)?;
        let value = f.norm_squared() + lambda * soft_l1_prior(x);
        Ok((f, value))
    };
    let gradient_at =
        |trace: &mut TraceBuilder, x: &DVector<f64>, f: &DVector<f64>| -> Result<DVector<f64>> {
            let j = trace.jacobian(problem, x)?;
            Ok(j.tr_mul(f) * 2.0 + soft_l1_prior_gradient(x) * lambda)
        };

    let (f, value) = value_at(&mut trace, &x0)?;
    let gradient = gradient_at(&mut trace, &x0, &f)?;
    let mut cur = Point {
        x: x0,
        f,
        value,
        gradient,
    };
    let initial_norm = cur.f.norm();
    trace.snapshot(&cur.x, initial_norm, cur.value);

    let mut inverse_hessian = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    for _ in 0..config.max_outer_iterations {
        if cur.gradient.norm() == 0.0 || initial_norm == 0.0 && lambda == 0.0 {
            return Ok(trace.finish(&cur.x, cur.f.norm(), Termination::Stationary));
        }
        let mut direction = -(&inverse_hessian * &cur.gradient);
        let mut slope = cur.gradient.dot(&direction);
        if !(slope < 0.0) {
            inverse_hessian.fill_with_identity();
            direction = -cur.gradient.clone();
            slope = cur.gradient.dot(&direction);
        }

        let mut t = 1.0;
        let mut found = None;
        for _ in 0..=MAX_BACKTRACKS {
            let candidate = &cur.x + &direction * t;
            let (f, value) = value_at(&mut trace, &candidate)?;
            if value <= cur.value + ARMIJO_C1 * t * slope {
                found = Some((candidate, f, value));
                break;
            }
            t *= 0.5;
        }
        let Some((x, f, value)) = found else {
            return Ok(trace.finish(&cur.x, cur.f.norm(), Termination::LineSearchFailure));
        };
        let gradient = gradient_at(&mut trace, &x, &f)?;
        let s = &x - &cur.x;
        let y = &gradient - &cur.gradient;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                inverse_hessian *= sy / y.norm_squared();
                scaled = true;
            }
            bfgs_update(&mut inverse_hessian, &s, &y, sy);
        }
        trace.record(IterationRecord {
            step_norm: s.norm(),
            accepted: true,
            inner_stop: None,
            kept_columns: None,
            unique_coordinates: 0,
            radius: None,
        });
        cur = Point {
            x,
            f,
            value,
            gradient,
        };
        let norm = cur.f.norm();
        trace.snapshot(&cur.x, norm, cur.value);
        if lambda == 0.0 && norm < CONVERGED_RELATIVE_RESIDUAL * initial_norm {
            return Ok(trace.finish(&cur.x, norm, Termination::Converged));
        }
    }
    let norm = cur.f.norm();
    Ok(trace.finish(&cur.x, norm, Termination::MaxIterations))
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T` with `rho = 1 / s.y`.
fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, sy: f64) {
    let rho = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // expanded form: H + rho^2 (y.Hy) s s^T + rho s s^T - rho (Hy s^T + s (Hy)^T)
    let coeff = rho * rho * yhy + rho;
    h.ger(coeff, s, s, 1.0);
    h.ger(-rho, &hy, s, 1.0);
    h.ger(-rho, s, &hy, 1.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LinearProblem;
    use crate::solvers::Method;

    fn scalar(c: f64) -> LinearProblem {
        LinearProblem::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, c),
        )
        .unwrap()
    }

    fn config(lambda: f64) -> SolverConfig {
        SolverConfig {
            method: Method::BfgsSoftL1,
            soft_l1_lambda: lambda,
            max_outer_iterations: 100,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn unregularized_scalar() {
        let trace = solve_bfgs_soft_l1(&scalar(2.5), &config(0.0)).unwrap();
        assert!((trace.final_x[0] - 2.5).abs() < 1e-10);
    }

    /// Root of 2(x - 1) + 4x / sqrt(1 + x^2) on (0, 1) by bisection.
    fn bisect_oracle() -> f64 {
        let g = |x: f64| 2.0 * (x - 1.0) + 2.0 * 2.0 * x / (1.0 + x * x).sqrt();
        let (mut lo, mut hi) = (0.0, 1.0);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn regularized_scalar_matches_bisection() {
        let root = bisect_oracle();
        assert!(root > 0.0 && root < 1.0);
        let trace = solve_bfgs_soft_l1(&scalar(1.0), &config(2.0)).unwrap();
        assert!(
            (trace.final_x[0] - root).abs() < 1e-8,
            "{} vs {root}",
            trace.final_x[0]
        );
    }

    #[test]
    fn prior_at_origin() {
        let z = DVector::zeros(4);
        assert_eq!(soft_l1_prior(&z), 0.0);
        assert_eq!(soft_l1_prior_gradient(&z), z);
    }

    #[test]
    fn prior_gradient_matches_finite_differences() {
        let x = DVector::from_row_slice(&[-2.0, -0.3, 0.0, 0.7, 5.0]);
        let g = soft_l1_prior_gradient(&x);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut p = x.clone();
            p[i] += h;
            let mut m = x.clone();
            m[i] -= h;
            let fd = (soft_l1_prior(&p) - soft_l1_prior(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn objective_never_increases() {
        let p = LinearProblem::new(
            DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.1, 1e-6, 0.4, 2.0]),
            DVector::from_row_slice(&[5.0, 1.0, -2.0]),
        )
        .unwrap();
        let trace = solve_bfgs_soft_l1(&p, &config(0.5)).unwrap();
        assert!(trace
            .snapshots
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective));
    }
}
