use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sparse_gn::par::{self, Execution};
use sparse_gn::solvers::Method;
use sparse_gn::synth::{generate_scene, BlendshapeScene, MotivatingCase, SceneSpec};
use sparse_gn_cli::motivating::write_motivating;
use sparse_gn_cli::{
    run_motivating, run_sweep, run_table_experiment, threads_from_env, ExperimentConfig, SweepKind,
};

#[derive(Parser)]
#[command(
    name = "sparse-gn",
    version,
    about = "Pruned coordinate-descent Gauss-Newton experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated methods: dogleg, dogleg_l2, bfgs_soft_l1, pruned_cd.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Also write long-format CSVs for plotting.
    #[arg(long)]
    plot_data: bool,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(methods) = &self.methods {
            cfg.methods = methods.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the two-parameter motivating systems.
    Motivating {
        /// b01, b51, or all.
        #[arg(long, default_value = "all")]
        case: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        plot_data: bool,
    },
    /// Weight-recovery comparison of all methods over noise levels and seeds.
    Table(Common),
    /// Sweep a pruned coordinate-descent setting.
    Sweep {
        /// step-size, selection-step, prune-threshold, or column-rule.
        kind: SweepKind,
        #[command(flatten)]
        common: Common,
    },
    /// Generate or inspect synthetic scenes.
    #[command(subcommand)]
    Scene(SceneCommand),
}

#[derive(Subcommand)]
enum SceneCommand {
    /// Write a generated scene as JSON.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print a summary of a scene file.
    Show { path: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = threads_from_env()?;
    par::with_threads(threads, || dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<()> {
    let execution = Execution::default();
    match command {
        Command::Motivating {
            case,
            out,
            plot_data,
        } => {
            let cases = match case.to_ascii_lowercase().as_str() {
                "all" => vec![MotivatingCase::B01, MotivatingCase::B51],
                other => vec![other.parse::<MotivatingCase>()?],
            };
            let reports = cases
                .into_iter()
                .map(run_motivating)
                .collect::<Result<Vec<_>>>()?;
            for r in &reports {
                print!("{}", r.summary());
            }
            write_motivating(&reports, &out, plot_data)?;
            println!("wrote {}", out.display());
        }
        Command::Table(common) => {
            let resolved = common.experiment()?.resolve()?;
            let report = run_table_experiment(&resolved, execution)?;
            println!(
                "{:<14} {:>6} {:>12} {:>12} {:>10} {:>8} {:>7}",
                "method", "noise", "l2", "l1", "emd", "l0", "gini"
            );
            for a in report.aggregates() {
                println!(
                    "{:<14} {:>6} {:>12.4} {:>12.4} {:>10.4} {:>8.1} {:>7.3}",
                    a.method.name(),
                    a.noise,
                    a.l2_error,
                    a.l1_error,
                    a.emd_error,
                    a.l0_zeros,
                    a.gini
                );
            }
            let failures: usize = report.aggregates().iter().map(|a| a.failures).sum();
            if failures > 0 {
                eprintln!("{failures} run(s) failed; see rows.csv");
            }
            report.write(&common.out, common.plot_data)?;
            println!("wrote {}", common.out.display());
        }
        Command::Sweep { kind, common } => {
            let resolved = common.experiment()?.resolve()?;
            let report = run_sweep(kind, &resolved, execution)?;
            for (setting, _) in &report.settings {
                for &noise in &resolved.noise_levels {
                    let trace = report.mean_trace(setting, noise);
                    let shown: Vec<String> = trace.iter().map(|r| format!("{r:.4}")).collect();
                    println!("{kind} {setting:<14} noise {noise:<6} {}", shown.join(" "));
                }
            }
            report.write(&common.out, common.plot_data)?;
            println!("wrote {}", common.out.display());
        }
        Command::Scene(SceneCommand::Gen { config, seed, out }) => {
            let mut spec = match config {
                Some(path) => ExperimentConfig::load(&path)?.scene,
                None => SceneSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let scene = generate_scene(&spec)?;
            let name = format!("scene_{}.json", spec.seed);
            sparse_gn_cli::output::write_file(&out, &name, &(scene.to_json()? + "\n"))?;
            println!("wrote {}", out.join(name).display());
        }
        Command::Scene(SceneCommand::Show { path }) => {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let scene = BlendshapeScene::from_json(&text)?;
            print!("{}", describe(&scene));
        }
    }
    Ok(())
}

fn describe(scene: &BlendshapeScene) -> String {
    let active: Vec<String> = scene
        .true_weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(i, w)| format!("{i}={w}"))
        .collect();
    let duplicates = scene.duplicate_of.iter().filter(|d| d.is_some()).count();
    format!(
        "scene_version {}\nseed {}\npoints {}\nshapes {} ({duplicates} near-duplicates)\ncurves {} x {} samples\ncamera focal {} distance {} principal ({}, {})\ntrue weights {}\n",
        scene.scene_version,
        scene.seed,
        scene.neutral.len(),
        scene.parameter_count(),
        scene.curves.len(),
        scene.samples_per_curve,
        scene.camera.focal_length,
        scene.camera.distance,
        scene.camera.principal_point[0],
        scene.camera.principal_point[1],
        active.join(", ")
    )
}
