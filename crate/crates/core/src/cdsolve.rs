//! Coordinate descent on the pruned linear subproblem `J_S dx_S = -f(x)`.
//!
//! Every inner iteration orients each candidate column so that it points along
//! the residual, scores it with the active [`ColumnRule`], and moves the chosen
//! coordinate by a step that never exceeds the greedy (exact line minimum)
//! step. Overshoot is therefore impossible and the linear residual norm is
//! non-increasing.

use std::fmt;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::problem::{check_len, LinearSubproblem};
use crate::{Error, Result};

/// Relative residual below which the linear subproblem counts as solved.
pub const CONVERGED_RELATIVE_RESIDUAL: f64 = 1e-12;

/// Correlations are refreshed from the residual this often to bound drift.
const REFRESH_INTERVAL: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRule {
    /// Maximize `M = 2 r.j - alpha ||j||^2` for the selection step `alpha`.
    Ours,
    /// Gauss-Southwell: maximize `r.j`.
    #[serde(rename = "gs")]
    GaussSouthwell,
    /// Maximum block improvement: maximize the absolute cosine, ignoring magnitude.
    Mbi,
}

impl ColumnRule {
    pub fn name(self) -> &'static str {
        match self {
            ColumnRule::Ours => "ours",
            ColumnRule::GaussSouthwell => "gs",
            ColumnRule::Mbi => "mbi",
        }
    }
}

impl fmt::Display for ColumnRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "StepRepr")]
pub enum StepSize {
    Greedy,
    /// Fixed magnitude, clamped so it never exceeds the greedy step.
    Fixed(f64),
}

/// Step used only when scoring columns under [`ColumnRule::Ours`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "StepRepr")]
pub enum SelectionStep {
    SameAsTaken,
    Greedy,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum StepRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<StepRepr> for StepSize {
    type Error = String;
    fn try_from(r: StepRepr) -> std::result::Result<Self, String> {
        match r {
            StepRepr::Name(s) if s == "greedy" => Ok(StepSize::Greedy),
            StepRepr::Name(s) => Err(format!(
                "unknown step size {s:?}, expected \"greedy\" or a number"
            )),
            StepRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(StepSize::Fixed(v)),
            StepRepr::Value(v) => Err(format!("fixed step size must be positive, got {v}")),
        }
    }
}

impl From<StepSize> for StepRepr {
    fn from(s: StepSize) -> Self {
        match s {
            StepSize::Greedy => StepRepr::Name("greedy".into()),
            StepSize::Fixed(v) => StepRepr::Value(v),
        }
    }
}

impl TryFrom<StepRepr> for SelectionStep {
    type Error = String;
    fn try_from(r: StepRepr) -> std::result::Result<Self, String> {
        match r {
            StepRepr::Name(s) if s == "same_as_taken" => Ok(SelectionStep::SameAsTaken),
            StepRepr::Name(s) if s == "greedy" => Ok(SelectionStep::Greedy),
            StepRepr::Name(s) => Err(format!(
                "unknown selection step {s:?}, expected \"same_as_taken\", \"greedy\" or a number"
            )),
            StepRepr::Value(v) if v > 0.0 && v.is_finite() => Ok(SelectionStep::Fixed(v)),
            StepRepr::Value(v) => Err(format!("fixed selection step must be positive, got {v}")),
        }
    }
}

impl From<SelectionStep> for StepRepr {
    fn from(s: SelectionStep) -> Self {
        match s {
            SelectionStep::SameAsTaken => StepRepr::Name("same_as_taken".into()),
            SelectionStep::Greedy => StepRepr::Name("greedy".into()),
            SelectionStep::Fixed(v) => StepRepr::Value(v),
        }
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Greedy => f.write_str("greedy"),
            StepSize::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl fmt::Display for SelectionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionStep::SameAsTaken => f.write_str("same_as_taken"),
            SelectionStep::Greedy => f.write_str("greedy"),
            SelectionStep::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// A parameter bound, either shared by every parameter or given per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    PerParameter(Vec<f64>),
}

impl Bound {
    fn resolve(&self, n: usize, what: &'static str) -> Result<Vec<f64>> {
        match self {
            Bound::Scalar(v) => Ok(vec![*v; n]),
            Bound::PerParameter(v) => {
                check_len(what, n, v.len())?;
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdConfig {
    pub rule: ColumnRule,
    pub step_size: StepSize,
    pub selection_step_size: SelectionStep,
    pub max_unique_coordinates: usize,
    /// Stop when a step would reduce `||r||` by less than this fraction of the
    /// initial residual norm. Zero disables the check.
    pub min_rel_decrease: f64,
    pub max_inner_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter_min: Option<Bound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter_max: Option<Bound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trust_radius: Option<f64>,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            rule: ColumnRule::Ours,
            step_size: StepSize::Fixed(1e-2),
            selection_step_size: SelectionStep::SameAsTaken,
            max_unique_coordinates: 10,
            min_rel_decrease: 1e-3,
            max_inner_iterations: 1000,
            parameter_min: None,
            parameter_max: None,
            trust_radius: None,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if let StepSize::Fixed(t) = self.step_size {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(format!(
                    "step size must be positive, got {t}"
                )));
            }
        }
        if let SelectionStep::Fixed(t) = self.selection_step_size {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config(format!(
                    "selection step size must be positive, got {t}"
                )));
            }
        }
        if self.max_unique_coordinates == 0 {
            return Err(Error::config("max_unique_coordinates must be positive"));
        }
        if self.max_inner_iterations == 0 {
            return Err(Error::config("max_inner_iterations must be positive"));
        }
        if !(self.min_rel_decrease >= 0.0) {
            return Err(Error::config("min_rel_decrease must be non-negative"));
        }
        if let Some(mu) = self.trust_radius {
            if !(mu > 0.0) {
                return Err(Error::config(format!(
                    "trust radius must be positive, got {mu}"
                )));
            }
        }
        if let (Some(Bound::Scalar(lo)), Some(Bound::Scalar(hi))) =
            (&self.parameter_min, &self.parameter_max)
        {
            if lo > hi {
                return Err(Error::config(format!(
                    "parameter_min {lo} exceeds parameter_max {hi}"
                )));
            }
        }
        Ok(())
    }

    /// Resolves the configured bounds for `n` parameters. Missing sides are infinite.
    pub fn limits(&self, n: usize) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        if self.parameter_min.is_none() && self.parameter_max.is_none() {
            return Ok(None);
        }
        let lo = match &self.parameter_min {
            Some(b) => b.resolve(n, "parameter_min")?,
            None => vec![f64::NEG_INFINITY; n],
        };
        let hi = match &self.parameter_max {
            Some(b) => b.resolve(n, "parameter_max")?,
            None => vec![f64::INFINITY; n],
        };
        if let Some(i) = (0..n).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::config(format!(
                "parameter {i}: min {} exceeds max {}",
                lo[i], hi[i]
            )));
        }
        Ok(Some((lo, hi)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    ResidualStall,
    UniqueCoordCap,
    IterationCap,
    TrustRegion,
    Converged,
    EmptyColumnSet,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::ResidualStall => "RESIDUAL_STALL",
            StopReason::UniqueCoordCap => "UNIQUE_COORD_CAP",
            StopReason::IterationCap => "ITERATION_CAP",
            StopReason::TrustRegion => "TRUST_REGION",
            StopReason::Converged => "CONVERGED",
            StopReason::EmptyColumnSet => "EMPTY_COLUMN_SET",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerStep {
    /// Parameter index of the chosen column.
    pub column: usize,
    /// Step magnitude along the oriented column (always `>= 0`).
    pub alpha: f64,
    /// Orientation sign; the parameter moves by `sign * alpha`.
    pub sign: f64,
    /// Linear residual norm after the step.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdResult {
    /// Step in full parameter indexing; untouched coordinates are exactly zero.
    pub delta_x: DVector<f64>,
    pub inner_trace: Vec<InnerStep>,
    pub stop_reason: StopReason,
    pub initial_residual_norm: f64,
    pub final_residual_norm: f64,
}

impl CdResult {
    /// Distinct parameter indices used, in order of first use.
    pub fn unique_coordinates(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for s in &self.inner_trace {
            if !seen.contains(&s.column) {
                seen.push(s.column);
            }
        }
        seen
    }
}

/// Flips `column` so that it has a non-negative dot product with `residual`.
/// Orthogonal columns keep sign `+1`.
pub fn orient_column(
    column: DVectorView<'_, f64>,
    residual: DVectorView<'_, f64>,
) -> (DVector<f64>, f64) {
    if column.dot(&residual) < 0.0 {
        (-column.into_owned(), -1.0)
    } else {
        (column.into_owned(), 1.0)
    }
}

/// `r.j / ||j||^2`, the step minimizing `||r - alpha j||` along an oriented column.
pub fn greedy_step(residual: DVectorView<'_, f64>, column: DVectorView<'_, f64>) -> Result<f64> {
    let n2 = column.norm_squared();
    if n2 == 0.0 {
        return Err(Error::ZeroColumn(0));
    }
    Ok(residual.dot(&column) / n2)
}

/// `M = 2 r.j - alpha ||j||^2`, the residual reduction per unit step.
pub fn score_column(
    residual: DVectorView<'_, f64>,
    column: DVectorView<'_, f64>,
    alpha: f64,
) -> f64 {
    reduction_score(residual.dot(&column), column.norm_squared(), alpha)
}

#[inline]
fn reduction_score(dot: f64, norm_sq: f64, alpha: f64) -> f64 {
    2.0 * dot - alpha * norm_sq
}

/// Step the selection rule scores with, given the oriented dot and the greedy step.
#[inline]
fn selection_alpha(config: &CdConfig, greedy: f64) -> f64 {
    match config.selection_step_size {
        SelectionStep::Greedy => greedy,
        SelectionStep::Fixed(t) => t.min(greedy),
        SelectionStep::SameAsTaken => taken_alpha(config.step_size, greedy),
    }
}

#[inline]
fn taken_alpha(step: StepSize, greedy: f64) -> f64 {
    match step {
        StepSize::Greedy => greedy,
        StepSize::Fixed(t) => t.min(greedy),
    }
}

/// Score of a candidate under `rule`, given `|r.j|` and `||j||^2`.
#[inline]
fn rule_score(rule: ColumnRule, config: &CdConfig, abs_dot: f64, norm_sq: f64) -> f64 {
    match rule {
        ColumnRule::GaussSouthwell => abs_dot,
        ColumnRule::Mbi => abs_dot / norm_sq.sqrt(),
        ColumnRule::Ours => {
            let greedy = abs_dot / norm_sq;
            reduction_score(abs_dot, norm_sq, selection_alpha(config, greedy))
        }
    }
}

/// Picks the best of `columns` for `residual` under `config.rule`.
///
/// Ties go to the lowest index. Zero columns are never selected; `None` means
/// there was no candidate.
pub fn select_column(
    columns: &DMatrix<f64>,
    residual: &DVector<f64>,
    config: &CdConfig,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, col) in columns.column_iter().enumerate() {
        let n2 = col.norm_squared();
        if n2 == 0.0 {
            continue;
        }
        let score = rule_score(config.rule, config, col.dot(residual).abs(), n2);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

fn non_finite(iteration: usize, what: &str) -> Error {
    Error::NonFinite {
        context: format!("coordinate descent iteration {iteration}: {what}"),
    }
}

/// Runs coordinate descent on the columns `kept` of `sub`.
///
/// `sub.base_point` is the current parameter vector and is what the parameter
/// limits are checked against.
pub fn cd_solve(sub: &LinearSubproblem, kept: &[usize], config: &CdConfig) -> Result<CdResult> {
    config.validate()?;
    let n = sub.column_count();
    check_len("base point", n, sub.base_point.len())?;
    check_len("rhs", sub.jacobian.nrows(), sub.rhs.len())?;
    if let Some(&bad) = kept.iter().find(|&&i| i >= n) {
        return Err(Error::config(format!(
            "kept column {bad} out of range for {n} columns"
        )));
    }
    let limits = config.limits(n)?;

    let mut residual = sub.rhs.clone();
    let initial_norm = residual.norm();
    if !initial_norm.is_finite() {
        return Err(non_finite(0, "initial residual"));
    }
    let mut delta = DVector::zeros(n);
    let mut trace = Vec::new();
    let finish = |delta, trace, stop_reason, final_norm| {
        Ok(CdResult {
            delta_x: delta,
            inner_trace: trace,
            stop_reason,
            initial_residual_norm: initial_norm,
            final_residual_norm: final_norm,
        })
    };
    if initial_norm == 0.0 {
        return finish(delta, trace, StopReason::Converged, 0.0);
    }
    if kept.is_empty() {
        return finish(delta, trace, StopReason::EmptyColumnSet, initial_norm);
    }

    let jac = &sub.jacobian;
    let norm_sq: Vec<f64> = kept.iter().map(|&p| jac.column(p).norm_squared()).collect();
    if let Some(pos) = norm_sq.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroColumn(kept[pos]));
    }
    // dots[i] = r . j_kept[i], updated through cached Gram columns of used coordinates.
    let mut dots: Vec<f64> = kept.iter().map(|&p| jac.column(p).dot(&residual)).collect();
    let mut gram_cols: Vec<Option<Vec<f64>>> = vec![None; kept.len()];
    let mut used = vec![false; kept.len()];
    let mut unique = 0usize;
    let mut delta_norm_sq = 0.0f64;
    let mut current_norm = initial_norm;

    for iteration in 0..config.max_inner_iterations {
        if current_norm < CONVERGED_RELATIVE_RESIDUAL * initial_norm {
            return finish(delta, trace, StopReason::Converged, current_norm);
        }
        if iteration > 0 && iteration % REFRESH_INTERVAL == 0 {
            for (d, &p) in dots.iter_mut().zip(kept) {
                *d = jac.column(p).dot(&residual);
            }
        }

        let mut best: Option<(usize, f64)> = None;
        for i in 0..kept.len() {
            let abs_dot = dots[i].abs();
            if let Some((lo, hi)) = &limits {
                let p = kept[i];
                let pos = sub.base_point[p] + delta[p];
                let room = if dots[i] < 0.0 {
                    pos - lo[p]
                } else {
                    hi[p] - pos
                };
                if !(room > 0.0) {
                    continue;
                }
            }
            let score = rule_score(config.rule, config, abs_dot, norm_sq[i]);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let Some((i, _)) = best else {
            // every remaining direction is blocked by a parameter limit
            return finish(delta, trace, StopReason::ResidualStall, current_norm);
        };
        if !dots[i].is_finite() {
            return Err(non_finite(iteration, "column correlation"));
        }
        if !used[i] && unique >= config.max_unique_coordinates {
            return finish(delta, trace, StopReason::UniqueCoordCap, current_norm);
        }

        let p = kept[i];
        let sign = if dots[i] < 0.0 { -1.0 } else { 1.0 };
        let greedy = dots[i].abs() / norm_sq[i];
        let mut alpha = taken_alpha(config.step_size, greedy);
        let mut hits_bound = None;
        if let Some((lo, hi)) = &limits {
            let pos = sub.base_point[p] + delta[p];
            let (room, bound) = if sign < 0.0 {
                (pos - lo[p], lo[p])
            } else {
                (hi[p] - pos, hi[p])
            };
            if alpha >= room {
                alpha = room;
                hits_bound = Some(bound);
            }
        }
        if !alpha.is_finite() {
            return Err(non_finite(iteration, "step size"));
        }
        if alpha <= 0.0 {
            // best column is orthogonal to the residual: no descent direction left
            return finish(delta, trace, StopReason::ResidualStall, current_norm);
        }

        let new_coord = match hits_bound {
            Some(bound) => bound - sub.base_point[p],
            None => delta[p] + sign * alpha,
        };
        if let Some(mu) = config.trust_radius {
            let candidate = delta_norm_sq - delta[p] * delta[p] + new_coord * new_coord;
            if candidate.sqrt() > mu {
                return finish(delta, trace, StopReason::TrustRegion, current_norm);
            }
        }

        let step = sign * alpha;
        let candidate_residual = &residual - jac.column(p) * step;
        let candidate_norm = candidate_residual.norm();
        if !candidate_norm.is_finite() {
            return Err(non_finite(iteration, "residual norm"));
        }
        if config.min_rel_decrease > 0.0
            && (current_norm - candidate_norm) / initial_norm < config.min_rel_decrease
        {
            return finish(delta, trace, StopReason::ResidualStall, current_norm);
        }

        residual = candidate_residual;
        current_norm = candidate_norm;
        delta_norm_sq += new_coord * new_coord - delta[p] * delta[p];
        delta[p] = new_coord;
        if !used[i] {
            used[i] = true;
            unique += 1;
        }
        let gram = gram_cols[i].get_or_insert_with(|| {
            let col = jac.column(p);
            kept.iter().map(|&q| jac.column(q).dot(&col)).collect()
        });
        for (d, g) in dots.iter_mut().zip(gram.iter()) {
            *d -= step * g;
        }
        trace.push(InnerStep {
            column: p,
            alpha,
            sign,
            residual_norm: current_norm,
        });
    }
    finish(delta, trace, StopReason::IterationCap, current_norm)
}
