//! Weight-recovery comparison over methods, noise levels, and seeds.

use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sparse_gn::metrics::WeightReport;
use sparse_gn::par::{self, Execution};
use sparse_gn::solvers::{solve, Method, SolveTrace, SolverConfig};
use sparse_gn::synth::{generate_scene, BlendshapeScene, SceneSpec};

use crate::config::ResolvedExperiment;
use crate::output::{float, write_file, Csv};

/// Seed for the target noise of one (scene seed, noise level) pair.
pub fn noise_seed(seed: u64, level_index: usize) -> u64 {
    seed.wrapping_mul(1_000_003)
        .wrapping_add(level_index as u64 + 1)
}

/// One scene per seed, or the fixed scene for every seed.
pub fn scenes(resolved: &ResolvedExperiment, execution: Execution) -> Result<Vec<BlendshapeScene>> {
    if let Some(scene) = resolved.load_fixed_scene()? {
        return Ok(vec![scene; resolved.seeds.len()]);
    }
    par::map(&resolved.seeds, execution, |&seed| {
        generate_scene(&SceneSpec {
            seed,
            ..resolved.scene.clone()
        })
    })
    .into_iter()
    .map(|s| s.map_err(Into::into))
    .collect()
}

/// Solves the curve-matching problem of `scene` against a noisy target.
pub fn solve_scene(
    scene: &BlendshapeScene,
    noise: f64,
    noise_seed: u64,
    config: &SolverConfig,
) -> sparse_gn::Result<SolveTrace> {
    let target = scene.target(noise, noise_seed)?;
    let problem = scene.problem(&target)?;
    solve(&problem, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub noise: f64,
    pub seed: u64,
    /// `ok`, or the solver error.
    pub status: String,
    pub metrics: Option<WeightReport>,
    pub final_residual: f64,
    pub outer_iterations: usize,
    pub unique_coordinates: usize,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub row: ReportRow,
    pub trace: Option<SolveTrace>,
    pub true_weights: Vec<f64>,
}

/// Means over the successful seeds of one (method, noise) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub noise: f64,
    pub runs: usize,
    pub failures: usize,
    pub l2_error: f64,
    pub l1_error: f64,
    pub emd_error: f64,
    pub l0_zeros: f64,
    pub gini: f64,
    pub significant_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableReport {
    pub resolved: ResolvedExperiment,
    pub cells: Vec<Cell>,
}

pub fn run_table_experiment(
    resolved: &ResolvedExperiment,
    execution: Execution,
) -> Result<TableReport> {
    let scenes = scenes(resolved, execution)?;
    let mut jobs = Vec::new();
    for &method in &resolved.methods {
        for level in 0..resolved.noise_levels.len() {
            for s in 0..resolved.seeds.len() {
                jobs.push((method, level, s));
            }
        }
    }
    let cells = par::map(&jobs, execution, |&(method, level, s)| {
        let scene = &scenes[s];
        let seed = resolved.seeds[s];
        let noise = resolved.noise_levels[level];
        let result = solve_scene(
            scene,
            noise,
            noise_seed(seed, level),
            resolved.solver(method),
        );
        make_cell(method, noise, seed, scene, result)
    });
    Ok(TableReport {
        resolved: resolved.clone(),
        cells,
    })
}

fn make_cell(
    method: Method,
    noise: f64,
    seed: u64,
    scene: &BlendshapeScene,
    result: sparse_gn::Result<SolveTrace>,
) -> Cell {
    let true_weights = scene.true_weights.clone();
    let failed = |status: String| ReportRow {
        method,
        noise,
        seed,
        status,
        metrics: None,
        final_residual: f64::NAN,
        outer_iterations: 0,
        unique_coordinates: 0,
        wall_time_ms: f64::NAN,
    };
    match result {
        Err(e) => Cell {
            row: failed(e.to_string()),
            trace: None,
            true_weights,
        },
        Ok(trace) => match WeightReport::new(&trace.final_x, &true_weights) {
            Err(e) => Cell {
                row: failed(e.to_string()),
                trace: Some(trace),
                true_weights,
            },
            Ok(metrics) => Cell {
                row: ReportRow {
                    method,
                    noise,
                    seed,
                    status: "ok".into(),
                    metrics: Some(metrics),
                    final_residual: trace.final_residual_norm,
                    outer_iterations: trace.outer_iterations(),
                    unique_coordinates: trace.unique_coordinates(),
                    wall_time_ms: trace.wall_time.as_secs_f64() * 1e3,
                },
                trace: Some(trace),
                true_weights,
            },
        },
    }
}

impl TableReport {
    pub fn rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.cells.iter().map(|c| &c.row)
    }

    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for &method in &self.resolved.methods {
            for &noise in &self.resolved.noise_levels {
                let rows: Vec<&ReportRow> = self
                    .rows()
                    .filter(|r| r.method == method && r.noise == noise)
                    .collect();
                let ok: Vec<&WeightReport> =
                    rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
                let mean = |f: &dyn Fn(&WeightReport) -> f64| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
                    }
                };
                out.push(Aggregate {
                    method,
                    noise,
                    runs: ok.len(),
                    failures: rows.len() - ok.len(),
                    l2_error: mean(&|m| m.l2_error),
                    l1_error: mean(&|m| m.l1_error),
                    emd_error: mean(&|m| m.emd_error),
                    l0_zeros: mean(&|m| m.l0_zeros as f64),
                    gini: mean(&|m| m.gini),
                    significant_count: mean(&|m| m.significant_count as f64),
                });
            }
        }
        out
    }

    pub fn aggregate(&self, method: Method, noise: f64) -> Option<Aggregate> {
        self.aggregates()
            .into_iter()
            .find(|a| a.method == method && a.noise == noise)
    }

    pub fn rows_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "method",
            "noise",
            "seed",
            "status",
            "l2_error",
            "l1_error",
            "emd_error",
            "l0_zeros",
            "gini",
            "significant_count",
            "degenerate",
            "final_residual",
            "outer_iterations",
            "unique_coordinates",
        ]);
        for r in self.rows() {
            let m = r.metrics.as_ref();
            let metric = |f: &dyn Fn(&WeightReport) -> String| m.map(f).unwrap_or_default();
            csv.push(vec![
                r.method.to_string(),
                float(r.noise),
                r.seed.to_string(),
                r.status.clone(),
                metric(&|m| float(m.l2_error)),
                metric(&|m| float(m.l1_error)),
                metric(&|m| float(m.emd_error)),
                metric(&|m| m.l0_zeros.to_string()),
                metric(&|m| float(m.gini)),
                metric(&|m| m.significant_count.to_string()),
                metric(&|m| m.degenerate.to_string()),
                float(r.final_residual),
                r.outer_iterations.to_string(),
                r.unique_coordinates.to_string(),
            ]);
        }
        csv
    }

    /// Wall-clock times, kept apart so the other outputs are reproducible byte for byte.
    pub fn timings_csv(&self) -> Csv {
        let mut csv = Csv::new(&["method", "noise", "seed", "wall_time_ms"]);
        for r in self.rows() {
            csv.push(vec![
                r.method.to_string(),
                float(r.noise),
                r.seed.to_string(),
                float(r.wall_time_ms),
            ]);
        }
        csv
    }

    pub fn errors_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "method",
            "noise",
            "runs",
            "failures",
            "l2_error",
            "l1_error",
            "emd_error",
        ]);
        for a in self.aggregates() {
            csv.push(vec![
                a.method.to_string(),
                float(a.noise),
                a.runs.to_string(),
                a.failures.to_string(),
                float(a.l2_error),
                float(a.l1_error),
                float(a.emd_error),
            ]);
        }
        csv
    }

    pub fn sparsity_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "method",
            "noise",
            "runs",
            "l0_zeros",
            "gini",
            "significant_count",
        ]);
        for a in self.aggregates() {
            csv.push(vec![
                a.method.to_string(),
                float(a.noise),
                a.runs.to_string(),
                float(a.l0_zeros),
                float(a.gini),
                float(a.significant_count),
            ]);
        }
        csv
    }

    /// Residual norm before every outer iteration, one row per point.
    pub fn traces_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "method",
            "noise",
            "seed",
            "outer_iteration",
            "residual_norm",
        ]);
        for c in &self.cells {
            let Some(trace) = &c.trace else { continue };
            for (i, r) in trace.residual_history().iter().enumerate() {
                csv.push(vec![
                    c.row.method.to_string(),
                    float(c.row.noise),
                    c.row.seed.to_string(),
                    i.to_string(),
                    float(*r),
                ]);
            }
        }
        csv
    }

    pub fn weights_csv(&self) -> Csv {
        let mut csv = Csv::new(&["method", "noise", "seed", "index", "weight", "true_weight"]);
        for c in &self.cells {
            let Some(trace) = &c.trace else { continue };
            for (i, (w, t)) in trace.final_x.iter().zip(&c.true_weights).enumerate() {
                csv.push(vec![
                    c.row.method.to_string(),
                    float(c.row.noise),
                    c.row.seed.to_string(),
                    i.to_string(),
                    float(*w),
                    float(*t),
                ]);
            }
        }
        csv
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            schema_version: u32,
            config: &'a ResolvedExperiment,
            aggregates: Vec<Aggregate>,
            rows: Vec<&'a ReportRow>,
        }
        let rows = self.rows().collect();
        let mut text = serde_json::to_string_pretty(&Summary {
            schema_version: crate::config::SCHEMA_VERSION,
            config: &self.resolved,
            aggregates: self.aggregates(),
            rows,
        })?;
        text.push('\n');
        Ok(text)
    }

    /// Writes `rows.csv`, `errors.csv`, `sparsity.csv`, `timings.csv`, `report.json`,
    /// and with `plot_data` also `traces.csv` and `weights.csv`.
    pub fn write(&self, dir: &Path, plot_data: bool) -> Result<()> {
        let config = self.resolved.to_json();
        self.rows_csv().write(dir, "rows.csv", &config)?;
        self.errors_csv().write(dir, "errors.csv", &config)?;
        self.sparsity_csv().write(dir, "sparsity.csv", &config)?;
        self.timings_csv().write(dir, "timings.csv", &config)?;
        write_file(dir, "report.json", &self.summary_json()?)?;
        if plot_data {
            self.traces_csv().write(dir, "traces.csv", &config)?;
            self.weights_csv().write(dir, "weights.csv", &config)?;
        }
        Ok(())
    }
}
