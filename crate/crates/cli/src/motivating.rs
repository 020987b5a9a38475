//! Solutions of the two-parameter motivating systems, with the scaled column
//! vectors `a1 x1` and `a2 x2` for geometric plots.

use std::path::Path;

use anyhow::Result;
use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use sparse_gn::cdsolve::{cd_solve, CdConfig, ColumnRule, StepSize};
use sparse_gn::problem::{linearize, Problem};
use sparse_gn::solvers::{solve, Method, SolverConfig};
use sparse_gn::synth::{motivating_system, MotivatingCase, MotivatingSystem};

use crate::output::{float, write_file, Csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotivatingSolution {
    pub label: String,
    pub x: [f64; 2],
    pub a1x1: [f64; 2],
    pub a2x2: [f64; 2],
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotivatingReport {
    pub schema_version: u32,
    pub case: MotivatingCase,
    pub matrix: [[f64; 2]; 2],
    pub rhs: [f64; 2],
    pub solutions: Vec<MotivatingSolution>,
}

impl MotivatingReport {
    pub fn solution(&self, label: &str) -> Option<&MotivatingSolution> {
        self.solutions.iter().find(|s| s.label == label)
    }
}

fn solution(system: &MotivatingSystem, label: impl Into<String>, x: &[f64]) -> MotivatingSolution {
    let a = &system.matrix;
    let xv = DVector::from_column_slice(x);
    let r = system.problem().evaluate(&xv);
    MotivatingSolution {
        label: label.into(),
        x: [x[0], x[1]],
        a1x1: [a[(0, 0)] * x[0], a[(1, 0)] * x[0]],
        a2x2: [a[(0, 1)] * x[1], a[(1, 1)] * x[1]],
        residual_norm: r.norm(),
    }
}

/// Minimizer of `||Ax - b||^2 + l1 x1^2 + l2 x2^2` by a direct 2x2 solve.
pub fn per_column_ridge(system: &MotivatingSystem, lambdas: [f64; 2]) -> Option<[f64; 2]> {
    let a = Matrix2::from_iterator(system.matrix.iter().copied());
    let b = Vector2::new(system.rhs[0], system.rhs[1]);
    let lhs = a.transpose() * a + Matrix2::from_diagonal(&Vector2::new(lambdas[0], lambdas[1]));
    let x = lhs.lu().solve(&(a.transpose() * b))?;
    Some([x[0], x[1]])
}

fn dogleg_config(method: Method, lambda: f64) -> SolverConfig {
    SolverConfig {
        max_outer_iterations: 50,
        dogleg_initial_radius: 1e6,
        l2_lambda: lambda,
        ..SolverConfig::with_method(method)
    }
}

pub fn run_motivating(case: MotivatingCase) -> Result<MotivatingReport> {
    let system = motivating_system(case);
    let problem = system.problem();
    let mut solutions = Vec::new();

    let exact = solve(&problem, &dogleg_config(Method::Dogleg, 0.0))?;
    solutions.push(solution(&system, "exact", &exact.final_x));
    for lambda in [0.2, 1.0] {
        let ridge = solve(&problem, &dogleg_config(Method::DoglegL2, lambda))?;
        solutions.push(solution(&system, format!("ridge_{lambda}"), &ridge.final_x));
    }
    if let Some(x) = per_column_ridge(&system, [0.0, 1.0]) {
        solutions.push(solution(&system, "per_column_0_1", &x));
    }

    let greedy = |unique: usize| SolverConfig {
        cd: CdConfig {
            step_size: StepSize::Greedy,
            max_unique_coordinates: unique,
            ..CdConfig::default()
        },
        ..SolverConfig::with_method(Method::PrunedCd)
    };
    let single = solve(&problem, &greedy(1))?;
    solutions.push(solution(&system, "single_column", &single.final_x));
    let pruned = solve(&problem, &greedy(10))?;
    solutions.push(solution(&system, "pruned_cd", &pruned.final_x));

    for (i, x) in mbi_iterates(&system, 3)?.iter().enumerate() {
        solutions.push(solution(&system, format!("mbi_{}", i + 1), x));
    }

    let m = &system.matrix;
    Ok(MotivatingReport {
        schema_version: crate::config::SCHEMA_VERSION,
        case,
        matrix: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
        rhs: [system.rhs[0], system.rhs[1]],
        solutions,
    })
}

/// Iterates of greedy-step MBI coordinate descent on both columns from `x = 0`.
pub fn mbi_iterates(system: &MotivatingSystem, steps: usize) -> Result<Vec<Vec<f64>>> {
    let sub = linearize(&system.problem(), &DVector::zeros(2))?;
    let config = CdConfig {
        rule: ColumnRule::Mbi,
        step_size: StepSize::Greedy,
        min_rel_decrease: 0.0,
        max_inner_iterations: steps,
        ..CdConfig::default()
    };
    let result = cd_solve(&sub, &[0, 1], &config)?;
    let mut x = vec![0.0; 2];
    Ok(result
        .inner_trace
        .iter()
        .map(|s| {
            x[s.column] += s.sign * s.alpha;
            x.clone()
        })
        .collect())
}

impl MotivatingReport {
    pub fn csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "case",
            "label",
            "x1",
            "x2",
            "a1x1_0",
            "a1x1_1",
            "a2x2_0",
            "a2x2_1",
            "residual_norm",
        ]);
        for s in &self.solutions {
            csv.push(vec![
                self.case.to_string(),
                s.label.clone(),
                float(s.x[0]),
                float(s.x[1]),
                float(s.a1x1[0]),
                float(s.a1x1[1]),
                float(s.a2x2[0]),
                float(s.a2x2[1]),
                float(s.residual_norm),
            ]);
        }
        csv
    }

    /// Long format: one row per plotted 2D vector (`b`, `a1x1`, `a2x2`).
    pub fn vectors_csv(&self) -> Csv {
        let mut csv = Csv::new(&["case", "label", "vector", "x", "y"]);
        for s in &self.solutions {
            for (name, v) in [("b", self.rhs), ("a1x1", s.a1x1), ("a2x2", s.a2x2)] {
                csv.push(vec![
                    self.case.to_string(),
                    s.label.clone(),
                    name.into(),
                    float(v[0]),
                    float(v[1]),
                ]);
            }
        }
        csv
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "case {}: b = ({}, {})\n",
            self.case, self.rhs[0], self.rhs[1]
        );
        for s in &self.solutions {
            out.push_str(&format!(
                "  {:<16} x = ({:>14.8}, {:>14.8})  |r| = {:.3e}\n",
                s.label, s.x[0], s.x[1], s.residual_norm
            ));
        }
        out
    }
}

/// Runs the given cases and writes `motivating.csv` and `motivating.json`
/// (plus `motivating_vectors.csv` with `plot_data`).
pub fn write_motivating(reports: &[MotivatingReport], dir: &Path, plot_data: bool) -> Result<()> {
    let cases: Vec<MotivatingCase> = reports.iter().map(|r| r.case).collect();
    let config = serde_json::to_string(&serde_json::json!({ "cases": cases }))?;
    let mut all = Csv::new(&[]);
    let mut vectors = Csv::new(&[]);
    for r in reports {
        let (c, v) = (r.csv(), r.vectors_csv());
        all.header = c.header;
        all.rows.extend(c.rows);
        vectors.header = v.header;
        vectors.rows.extend(v.rows);
    }
    all.write(dir, "motivating.csv", &config)?;
    let mut json = serde_json::to_string_pretty(reports)?;
    json.push('\n');
    write_file(dir, "motivating.json", &json)?;
    if plot_data {
        vectors.write(dir, "motivating_vectors.csv", &config)?;
    }
    Ok(())
}
