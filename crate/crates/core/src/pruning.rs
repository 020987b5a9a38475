//! Correlation pruning of Jacobian columns against the current residual.

use nalgebra::{DVector, DVectorView};

use crate::problem::LinearSubproblem;

/// Columns shorter than this fraction of the longest column are treated as zero.
pub const ZERO_COLUMN_FLOOR: f64 = 1e-12;

/// Default threshold on the absolute cosine between a column and the residual.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.3;

/// Absolute cosine `|column . residual| / (||column|| ||residual||)`.
///
/// Returns `None` when the residual is zero (nothing left to correlate with,
/// i.e. the linearization is already solved) and `Some(0.0)` for a zero column.
pub fn correlation(column: DVectorView<'_, f64>, residual: DVectorView<'_, f64>) -> Option<f64> {
    let rnorm = residual.norm();
    if rnorm == 0.0 {
        return None;
    }
    let cnorm = column.norm();
    if cnorm == 0.0 {
        return Some(0.0);
    }
    Some((column.dot(&residual).abs() / (cnorm * rnorm)).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneResult {
    /// Ascending indices of columns that survived the threshold.
    pub kept_indices: Vec<usize>,
    /// Per-column absolute cosine; zero for dropped zero-norm columns.
    pub correlations: Vec<f64>,
    pub dropped_zero_columns: Vec<usize>,
    pub threshold: f64,
}

impl PruneResult {
    /// Indices that had a usable norm but fell under the threshold.
    pub fn pruned_indices(&self) -> Vec<usize> {
        let mut kept = self.kept_indices.iter().peekable();
        let mut zero = self.dropped_zero_columns.iter().peekable();
        (0..self.correlations.len())
            .filter(|i| {
                if kept.peek() == Some(&i) {
                    kept.next();
                    return false;
                }
                if zero.peek() == Some(&i) {
                    zero.next();
                    return false;
                }
                true
            })
            .collect()
    }
}

/// Keeps the columns of `sub.jacobian` whose correlation with `sub.rhs` is at
/// least `threshold`.
///
/// Returns `None` if the right-hand side is zero. An empty kept set is a legal
/// outcome.
pub fn prune_columns(sub: &LinearSubproblem, threshold: f64) -> Option<PruneResult> {
    prune_against(sub, &sub.rhs, threshold)
}

pub(crate) fn prune_against(
    sub: &LinearSubproblem,
    residual: &DVector<f64>,
    threshold: f64,
) -> Option<PruneResult> {
    if residual.norm() == 0.0 {
        return None;
    }
    let jac = &sub.jacobian;
    let norms: Vec<f64> = jac.column_iter().map(|c| c.norm()).collect();
    let floor = ZERO_COLUMN_FLOOR * norms.iter().cloned().fold(0.0, f64::max);

    let mut kept_indices = Vec::new();
    let mut dropped_zero_columns = Vec::new();
    let mut correlations = Vec::with_capacity(norms.len());
    for (i, col) in jac.column_iter().enumerate() {
        if norms[i] == 0.0 || norms[i] < floor {
            dropped_zero_columns.push(i);
            correlations.push(0.0);
            continue;
        }
        let corr = correlation(col, residual.as_view()).unwrap_or(0.0);
        correlations.push(corr);
        if corr >= threshold {
            kept_indices.push(i);
        }
    }
    Some(PruneResult {
        kept_indices,
        correlations,
        dropped_zero_columns,
        threshold,
    })
}
