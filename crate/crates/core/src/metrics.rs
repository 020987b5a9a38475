//! Weight-recovery error and sparsity metrics.

use serde::{Deserialize, Serialize};

use crate::problem::check_len;
use crate::Result;

/// Magnitudes above this count as significant.
pub const SIGNIFICANT_THRESHOLD: f64 = 1e-3;

/// A metric value together with a flag marking a degenerate input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub l2_error: f64,
    pub l1_error: f64,
    pub emd_error: f64,
    pub l0_zeros: usize,
    pub gini: f64,
    pub significant_count: usize,
    /// Set when the EMD or Gini value came from a zero-mass convention.
    pub degenerate: bool,
}

impl WeightReport {
    pub fn new(w: &[f64], w_true: &[f64]) -> Result<Self> {
        let (l2_error, l1_error) = weight_errors(w, w_true)?;
        let emd = emd_error(w, w_true)?;
        let g = gini(w);
        Ok(Self {
            l2_error,
            l1_error,
            emd_error: emd.value,
            l0_zeros: l0_sparsity(w),
            gini: g.value,
            significant_count: significant_count(w),
            degenerate: emd.degenerate || g.degenerate,
        })
    }
}

/// `(‖w − w_true‖₂, ‖w − w_true‖₁)`.
pub fn weight_errors(w: &[f64], w_true: &[f64]) -> Result<(f64, f64)> {
    check_len("weights", w_true.len(), w.len())?;
    let (mut l2, mut l1) = (0.0, 0.0);
    for (a, b) in w.iter().zip(w_true) {
        let d = a - b;
        l2 += d * d;
        l1 += d.abs();
    }
    Ok((l2.sqrt(), l1))
}

/// One-dimensional earth mover's distance between the normalized magnitude
/// histograms of `w` and `w_true`, with ground distance `|i - j|`.
///
/// A zero vector against a nonzero one scores `K`; two zero vectors score 0.
/// Both cases set the degenerate flag.
pub fn emd_error(w: &[f64], w_true: &[f64]) -> Result<Flagged> {
    check_len("weights", w_true.len(), w.len())?;
    let ma: f64 = w.iter().map(|v| v.abs()).sum();
    let mb: f64 = w_true.iter().map(|v| v.abs()).sum();
    let value = match (ma > 0.0, mb > 0.0) {
        (false, false) => {
            return Ok(Flagged {
                value: 0.0,
                degenerate: true,
            })
        }
        (true, false) | (false, true) => {
            return Ok(Flagged {
                value: w.len() as f64,
                degenerate: true,
            })
        }
        (true, true) => {
            let (mut ca, mut cb, mut total) = (0.0, 0.0, 0.0);
            for (a, b) in w.iter().zip(w_true) {
                ca += a.abs() / ma;
                cb += b.abs() / mb;
                total += (ca - cb).abs();
            }
            total
        }
    };
    Ok(Flagged {
        value,
        degenerate: false,
    })
}

/// Number of entries exactly equal to zero.
pub fn l0_sparsity(w: &[f64]) -> usize {
    w.iter().filter(|v| **v == 0.0).count()
}

pub fn significant_count(w: &[f64]) -> usize {
    w.iter().filter(|v| v.abs() > SIGNIFICANT_THRESHOLD).count()
}

/// Gini sparsity index of the magnitudes of `w` (0 for uniform, `1 − 1/N` for one-hot).
///
/// An all-zero (or empty) vector scores 1 with the degenerate flag set.
pub fn gini(w: &[f64]) -> Flagged {
    let mut c: Vec<f64> = w.iter().map(|v| v.abs()).collect();
    let total: f64 = c.iter().sum();
    if !(total > 0.0) {
        return Flagged {
            value: 1.0,
            degenerate: true,
        };
    }
    c.sort_by(f64::total_cmp);
    let n = c.len() as f64;
    let sum: f64 = c
        .iter()
        .enumerate()
        .map(|(i, ck)| ck / total * ((n - (i + 1) as f64 + 0.5) / n))
        .sum();
    Flagged {
        value: 1.0 - 2.0 * sum,
        degenerate: false,
    }
}

/// Residual norms divided by the first entry.
pub fn relative_history(history: &[f64]) -> Vec<f64> {
    match history.first() {
        Some(&first) if first > 0.0 => history.iter().map(|r| r / first).collect(),
        _ => history.to_vec(),
    }
}
