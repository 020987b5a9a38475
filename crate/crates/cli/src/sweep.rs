//! Parameter sweeps of the pruned coordinate-descent solver.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use sparse_gn::cdsolve::{ColumnRule, SelectionStep, StepSize};
use sparse_gn::par::{self, Execution};
use sparse_gn::solvers::{Method, SolveTrace, SolverConfig};

use crate::config::ResolvedExperiment;
use crate::output::{float, Csv};
use crate::table::{noise_seed, scenes, solve_scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    StepSize,
    SelectionStep,
    PruneThreshold,
    ColumnRule,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] = [
        SweepKind::StepSize,
        SweepKind::SelectionStep,
        SweepKind::PruneThreshold,
        SweepKind::ColumnRule,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::StepSize => "step_size",
            SweepKind::SelectionStep => "selection_step",
            SweepKind::PruneThreshold => "prune_threshold",
            SweepKind::ColumnRule => "column_rule",
        }
    }

    /// Labeled solver settings for this sweep, derived from `base`.
    pub fn settings(self, base: &SolverConfig) -> Vec<(String, SolverConfig)> {
        let mut base = base.clone();
        base.method = Method::PrunedCd;
        let with = |f: &dyn Fn(&mut SolverConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c
        };
        match self {
            SweepKind::StepSize => {
                let steps = [
                    StepSize::Greedy,
                    StepSize::Fixed(0.01),
                    StepSize::Fixed(0.02),
                    StepSize::Fixed(0.1),
                    StepSize::Fixed(0.5),
                    StepSize::Fixed(1.0),
                ];
                steps
                    .into_iter()
                    .map(|step| {
                        let c = with(&|c| {
                            c.prune_threshold = 0.0;
                            c.cd.min_rel_decrease = 0.0;
                            c.cd.max_unique_coordinates = 10;
                            c.cd.step_size = step;
                        });
                        (step.to_string(), c)
                    })
                    .collect()
            }
            SweepKind::SelectionStep => {
                let mut out = vec![(
                    "gs".to_string(),
                    with(&|c| {
                        c.cd.rule = ColumnRule::GaussSouthwell;
                        c.cd.step_size = StepSize::Fixed(0.01);
                    }),
                )];
                for tau in [0.01, 0.1, 1.0] {
                    out.push((
                        format!("ours_{tau}"),
                        with(&|c| {
                            c.cd.rule = ColumnRule::Ours;
                            c.cd.step_size = StepSize::Fixed(0.01);
                            c.cd.selection_step_size = SelectionStep::Fixed(tau);
                        }),
                    ));
                }
                out
            }
            SweepKind::PruneThreshold => [0.0, 0.2, 0.3, 0.5]
                .into_iter()
                .map(|t| {
                    let c = with(&|c| {
                        c.prune_threshold = t;
                        c.cd.step_size = StepSize::Fixed(0.01);
                        c.cd.max_unique_coordinates = 50;
                    });
                    (t.to_string(), c)
                })
                .collect(),
            SweepKind::ColumnRule => [
                ColumnRule::Mbi,
                ColumnRule::GaussSouthwell,
                ColumnRule::Ours,
            ]
            .into_iter()
            .map(|rule| {
                let c = with(&|c| {
                    c.prune_threshold = 0.0;
                    c.cd.rule = rule;
                    c.cd.step_size = StepSize::Fixed(0.01);
                    c.cd.max_unique_coordinates = 10;
                });
                (rule.name().to_string(), c)
            })
            .collect(),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match SweepKind::ALL.into_iter().find(|k| k.name() == key) {
            Some(k) => Ok(k),
            None => bail!("unknown sweep {s:?} (expected step-size, selection-step, prune-threshold or column-rule)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub setting: String,
    pub noise: f64,
    pub seed: u64,
    pub result: std::result::Result<SolveTrace, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub resolved: ResolvedExperiment,
    pub settings: Vec<(String, SolverConfig)>,
    pub cells: Vec<SweepCell>,
}

/// Runs every sweep setting on every (noise, seed) pair of `resolved`. The
/// pruned-CD solver settings of `resolved` are the base for each setting.
pub fn run_sweep(
    kind: SweepKind,
    resolved: &ResolvedExperiment,
    execution: Execution,
) -> Result<SweepReport> {
    let base = resolved
        .solvers
        .get(&Method::PrunedCd)
        .cloned()
        .unwrap_or_else(|| SolverConfig::with_method(Method::PrunedCd));
    let settings = kind.settings(&base);
    let scenes = scenes(resolved, execution)?;
    let mut jobs = Vec::new();
    for k in 0..settings.len() {
        for level in 0..resolved.noise_levels.len() {
            for s in 0..resolved.seeds.len() {
                jobs.push((k, level, s));
            }
        }
    }
    let cells = par::map(&jobs, execution, |&(k, level, s)| {
        let seed = resolved.seeds[s];
        let noise = resolved.noise_levels[level];
        SweepCell {
            setting: settings[k].0.clone(),
            noise,
            seed,
            result: solve_scene(&scenes[s], noise, noise_seed(seed, level), &settings[k].1)
                .map_err(|e| e.to_string()),
        }
    });
    Ok(SweepReport {
        kind,
        resolved: resolved.clone(),
        settings,
        cells,
    })
}

impl SweepReport {
    /// Seed-mean residual norm before every outer iteration for one setting and noise
    /// level. Runs that stopped early hold their last value.
    pub fn mean_trace(&self, setting: &str, noise: f64) -> Vec<f64> {
        let traces: Vec<Vec<f64>> = self
            .cells
            .iter()
            .filter(|c| c.setting == setting && c.noise == noise)
            .filter_map(|c| c.result.as_ref().ok())
            .map(|t| t.residual_history())
            .collect();
        let len = traces.iter().map(Vec::len).max().unwrap_or(0);
        (0..len)
            .map(|i| {
                traces
                    .iter()
                    .map(|t| t.get(i).or(t.last()).copied().unwrap_or(f64::NAN))
                    .sum::<f64>()
                    / traces.len() as f64
            })
            .collect()
    }

    pub fn traces_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "setting",
            "noise",
            "seed",
            "status",
            "outer_iteration",
            "residual_norm",
        ]);
        for c in &self.cells {
            match &c.result {
                Ok(trace) => {
                    for (i, r) in trace.residual_history().iter().enumerate() {
                        csv.push(vec![
                            c.setting.clone(),
                            float(c.noise),
                            c.seed.to_string(),
                            "ok".into(),
                            i.to_string(),
                            float(*r),
                        ]);
                    }
                }
                Err(e) => csv.push(vec![
                    c.setting.clone(),
                    float(c.noise),
                    c.seed.to_string(),
                    e.clone(),
                    String::new(),
                    String::new(),
                ]),
            }
        }
        csv
    }

    pub fn mean_csv(&self) -> Csv {
        let mut csv = Csv::new(&["setting", "noise", "outer_iteration", "mean_residual_norm"]);
        for (setting, _) in &self.settings {
            for &noise in &self.resolved.noise_levels {
                for (i, r) in self.mean_trace(setting, noise).iter().enumerate() {
                    csv.push(vec![
                        setting.clone(),
                        float(noise),
                        i.to_string(),
                        float(*r),
                    ]);
                }
            }
        }
        csv
    }

    pub fn weights_csv(&self) -> Csv {
        let mut csv = Csv::new(&["setting", "noise", "seed", "index", "weight"]);
        for c in &self.cells {
            if let Ok(trace) = &c.result {
                for (i, w) in trace.final_x.iter().enumerate() {
                    csv.push(vec![
                        c.setting.clone(),
                        float(c.noise),
                        c.seed.to_string(),
                        i.to_string(),
                        float(*w),
                    ]);
                }
            }
        }
        csv
    }

    /// Writes `sweep_<kind>.csv` (per-run traces), `sweep_<kind>_mean.csv`,
    /// `sweep_<kind>_weights.csv`, and with `plot_data` a relative-trace file.
    pub fn write(&self, dir: &Path, plot_data: bool) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            sweep: SweepKind,
            experiment: &'a ResolvedExperiment,
            settings: &'a [(String, SolverConfig)],
        }
        let config = serde_json::to_string(&Header {
            sweep: self.kind,
            experiment: &self.resolved,
            settings: &self.settings,
        })?;
        let name = self.kind.name();
        self.traces_csv()
            .write(dir, &format!("sweep_{name}.csv"), &config)?;
        self.mean_csv()
            .write(dir, &format!("sweep_{name}_mean.csv"), &config)?;
        self.weights_csv()
            .write(dir, &format!("sweep_{name}_weights.csv"), &config)?;
        if plot_data {
            let mut csv = Csv::new(&["setting", "noise", "outer_iteration", "relative_residual"]);
            for (setting, _) in &self.settings {
                for &noise in &self.resolved.noise_levels {
                    let rel =
                        sparse_gn::metrics::relative_history(&self.mean_trace(setting, noise));
                    for (i, r) in rel.iter().enumerate() {
                        csv.push(vec![
                            setting.clone(),
                            float(noise),
                            i.to_string(),
                            float(*r),
                        ]);
                    }
                }
            }
            csv.write(dir, &format!("plot_sweep_{name}.csv"), &config)?;
        }
        Ok(())
    }
}
