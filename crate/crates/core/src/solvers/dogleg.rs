//! Powell dogleg on the Gauss-Newton model, optionally with an L2 prior
//! `lambda ||x||^2` (equivalent to appending `sqrt(lambda) x` to the residual).

use nalgebra::{DMatrix, DVector};

use super::{
    IterationRecord, Method, SolveTrace, SolverConfig, Termination, TraceBuilder,
    CONVERGED_RELATIVE_RESIDUAL,
};
use crate::problem::Problem;
use crate::Result;

const SHRINK_BELOW: f64 = 0.25;
const GROW_ABOVE: f64 = 0.75;
const SHRINK_FACTOR: f64 = 0.25;
const GROW_FACTOR: f64 = 2.0;

/// Handles both [`Method::Dogleg`] and [`Method::DoglegL2`]; the prior weight is
/// `config.l2_lambda` for the latter and zero otherwise.
pub fn solve_dogleg<P: Problem + ?Sized>(problem: &P, config: &SolverConfig) -> Result<SolveTrace> {
    let mut x = config.start(problem)?;
    let lambda = match config.method {
        Method::DoglegL2 => config.l2_lambda,
        _ => 0.0,
    };
    let mut trace = TraceBuilder::new(config.method);
    let mut radius = config.dogleg_initial_radius;

    let mut f = trace.evaluate(problem, &x)?;
    let initial_norm = f.norm();
    let mut cost = objective(&f, &x, lambda);
    trace.snapshot(&x, initial_norm, cost);
    if initial_norm == 0.0 && lambda * x.norm_squared() == 0.0 {
        return Ok(trace.finish(&x, initial_norm, Termination::Converged));
    }

    let mut jac = trace.jacobian(problem, &x)?;
    for _ in 0..config.max_outer_iterations {
        // half gradient and Gauss-Newton Hessian of the (prior-augmented) cost
        let mut hessian = jac.tr_mul(&jac);
        let mut gradient = jac.tr_mul(&f);
        for i in 0..x.len() {
            hessian[(i, i)] += lambda;
            gradient[i] += lambda * x[i];
        }
        if gradient.norm() == 0.0 {
            return Ok(trace.finish(&x, f.norm(), Termination::Stationary));
        }

        let step = dogleg_step(&hessian, &gradient, radius);
        let step_norm = step.norm();
        let predicted = -(2.0 * gradient.dot(&step) + step.dot(&(&hessian * &step)));
        if !(predicted > 0.0) || step_norm == 0.0 {
            return Ok(trace.finish(&x, f.norm(), Termination::Stationary));
        }

        let candidate = &x + &step;
        let f_new = trace.evaluate(problem, &candidate)?;
        let cost_new = objective(&f_new, &candidate, lambda);
        let rho = (cost - cost_new) / predicted;

        if rho < SHRINK_BELOW {
            radius *= SHRINK_FACTOR;
        } else if rho > GROW_ABOVE && step_norm >= 0.999 * radius {
            radius *= GROW_FACTOR;
        }
        let accepted = rho > 0.0;
        if accepted {
            x = candidate;
            f = f_new;
            cost = cost_new;
        }
        trace.record(IterationRecord {
            step_norm,
            accepted,
            inner_stop: None,
            kept_columns: None,
            unique_coordinates: 0,
            radius: Some(radius),
        });
        let norm = f.norm();
        trace.snapshot(&x, norm, cost);
        if norm < CONVERGED_RELATIVE_RESIDUAL * initial_norm {
            return Ok(trace.finish(&x, norm, Termination::Converged));
        }
        if accepted {
            jac = trace.jacobian(problem, &x)?;
        }
    }
    let norm = f.norm();
    Ok(trace.finish(&x, norm, Termination::MaxIterations))
}

fn objective(f: &DVector<f64>, x: &DVector<f64>, lambda: f64) -> f64 {
    f.norm_squared() + lambda * x.norm_squared()
}

/// Dogleg step for the model `2 g.p + p.H p` inside `||p|| <= radius`.
///
/// Falls back to the Cauchy point when `H` is not positive definite.
fn dogleg_step(hessian: &DMatrix<f64>, gradient: &DVector<f64>, radius: f64) -> DVector<f64> {
    let gauss_newton = hessian
        .clone()
        .cholesky()
        .map(|c| -c.solve(gradient))
        .filter(|p| p.iter().all(|v| v.is_finite()));
    if let Some(p) = &gauss_newton {
        if p.norm() <= radius {
            return p.clone();
        }
    }

    let g_norm = gradient.norm();
    let curvature = gradient.dot(&(hessian * gradient));
    if !(curvature > 0.0) {
        return gradient * (-radius / g_norm);
    }
    let cauchy = gradient * (-gradient.norm_squared() / curvature);
    let cauchy_norm = cauchy.norm();
    if cauchy_norm >= radius {
        return cauchy * (radius / cauchy_norm);
    }
    let Some(gn) = gauss_newton else {
        return cauchy;
    };
    // find tau in [0, 1] with ||cauchy + tau (gn - cauchy)|| = radius
    let d = &gn - &cauchy;
    let a = d.norm_squared();
    let b = 2.0 * cauchy.dot(&d);
    let c = cauchy.norm_squared() - radius * radius;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    // c < 0 here, so the root below is positive; this form avoids cancellation
    let tau = if b >= 0.0 {
        -2.0 * c / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    };
    cauchy + d * tau.clamp(0.0, 1.0)
}
