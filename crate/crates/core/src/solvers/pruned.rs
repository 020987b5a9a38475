use super::{
    IterationRecord, SolveTrace, SolverConfig, Termination, TraceBuilder,
    CONVERGED_RELATIVE_RESIDUAL,
};
use crate::cdsolve::cd_solve;
use crate::problem::{LinearSubproblem, Problem};
use crate::pruning::prune_columns;
use crate::Result;

/// Gauss-Newton with correlation pruning and a coordinate-descent inner solve.
///
/// Stops after `max_outer_iterations`, after an iteration that produces a zero
/// step, or once the nonlinear residual has dropped below `1e-12` of its start.
pub fn solve_pruned_cd<P: Problem + ?Sized>(
    problem: &P,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    let mut x = config.start(problem)?;
    let limits = config.cd.limits(x.len())?;
    let mut trace = TraceBuilder::new(config.method);

    let mut f = trace.evaluate(problem, &x)?;
    let initial_norm = f.norm();
    let mut norm = initial_norm;
    trace.snapshot(&x, norm, norm * norm);
    if norm == 0.0 {
        return Ok(trace.finish(&x, norm, Termination::Converged));
    }

    for outer in 0..config.max_outer_iterations {
        let jacobian = trace.jacobian(problem, &x)?;
        let sub = LinearSubproblem {
            jacobian,
            rhs: -&f,
            base_point: x.clone(),
        };
        let Some(pruned) = prune_columns(&sub, config.prune_threshold) else {
            return Ok(trace.finish(&x, norm, Termination::Converged));
        };
        let cd = cd_solve(&sub, &pruned.kept_indices, &config.cd)
            .map_err(|e| e.with_context(format_args!("outer iteration {outer}")))?;
        let step_norm = cd.delta_x.norm();
        x += &cd.delta_x;
        if let Some((lo, hi)) = &limits {
            // rounding in x + dx; the inner solve already keeps the exact value in range
            for i in 0..x.len() {
                x[i] = x[i].clamp(lo[i], hi[i]);
            }
        }
        trace.record(IterationRecord {
            step_norm,
            accepted: true,
            inner_stop: Some(cd.stop_reason),
            kept_columns: Some(pruned.kept_indices.len()),
            unique_coordinates: cd.unique_coordinates().len(),
            radius: None,
        });
        if step_norm == 0.0 {
            trace.snapshot(&x, norm, norm * norm);
            return Ok(trace.finish(&x, norm, Termination::ZeroStep));
        }
        f = trace
            .evaluate(problem, &x)
            .map_err(|e| e.with_context(format_args!("outer iteration {outer}")))?;
        norm = f.norm();
        trace.snapshot(&x, norm, norm * norm);
        if norm < CONVERGED_RELATIVE_RESIDUAL * initial_norm {
            return Ok(trace.finish(&x, norm, Termination::Converged));
        }
    }
    Ok(trace.finish(&x, norm, Termination::MaxIterations))
}
