//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparse_gn::cdsolve::{cd_solve, Bound, CdConfig, ColumnRule, SelectionStep, StepSize};
use sparse_gn::metrics::{emd_error, gini};
use sparse_gn::par::Execution;
use sparse_gn::problem::{linearize, LinearSubproblem, Problem};
use sparse_gn::pruning::prune_columns;
use sparse_gn::solvers::{solve, Method, SolverConfig};
use sparse_gn::synth::{generate_scene, motivating_system, MotivatingCase, SceneSpec};
use sparse_gn_cli::{run_sweep, run_table_experiment, ExperimentConfig, SweepKind, TableReport};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "motivating exact solution", motivating_exact),
        (2, "ridge closed form", ridge_oracle),
        (3, "pruning refusal", pruning_refusal),
        (4, "single-column recovery", single_column),
        (
            5,
            "greedy selection step reduces to Gauss-Southwell",
            gs_reduction,
        ),
        (6, "monotone inner residual", monotone_inner),
        (7, "synthetic recovery trend", recovery_trend),
        (8, "noise robustness trend", noise_robustness),
        (9, "metric identities", metric_identities),
        (10, "jacobian finite-difference oracle", jacobian_oracle),
        (11, "box limits and trust radius", box_and_trust),
        (12, "selection-step residual trend", selection_trend),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn large_radius(method: Method, lambda: f64) -> SolverConfig {
    SolverConfig {
        max_outer_iterations: 50,
        dogleg_initial_radius: 1e6,
        l2_lambda: lambda,
        ..SolverConfig::with_method(method)
    }
}

fn motivating_exact() -> Outcome {
    let problem = motivating_system(MotivatingCase::B01).problem();
    let config = large_radius(Method::Dogleg, 0.0);
    let expected = 1.0 / (0.1 + 1e-6);
    let mut fastest = Duration::MAX;
    let mut x = Vec::new();
    for _ in 0..20 {
        let t0 = Instant::now();
        let trace = solve(&problem, &config).map_err(err)?;
        fastest = fastest.min(t0.elapsed());
        x = trace.final_x;
    }
    let rel = x
        .iter()
        .map(|v| (v - expected).abs() / expected)
        .fold(0.0, f64::max);
    ensure!(rel <= 1e-8, "x = {x:?}, relative error {rel:e}");
    ensure!(
        fastest < Duration::from_millis(1),
        "fastest solve took {fastest:?}"
    );
    Ok(format!(
        "x = ({:.10}, {:.10}), rel err {rel:.1e}, {fastest:?}",
        x[0], x[1]
    ))
}

/// `(A^T A + diag(l)) x = A^T b` by Cramer's rule.
fn ridge_2x2(a: &DMatrix<f64>, b: &DVector<f64>, l: [f64; 2]) -> [f64; 2] {
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let m11 = a11 * a11 + a21 * a21 + l[0];
    let m12 = a11 * a12 + a21 * a22;
    let m22 = a12 * a12 + a22 * a22 + l[1];
    let r1 = a11 * b[0] + a21 * b[1];
    let r2 = a12 * b[0] + a22 * b[1];
    let det = m11 * m22 - m12 * m12;
    [(r1 * m22 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det]
}

fn ridge_oracle() -> Outcome {
    let mut details = Vec::new();
    for (case, lambda) in [(MotivatingCase::B01, 0.2), (MotivatingCase::B51, 1.0)] {
        let system = motivating_system(case);
        let trace =
            solve(&system.problem(), &large_radius(Method::DoglegL2, lambda)).map_err(err)?;
        let oracle = ridge_2x2(&system.matrix, &system.rhs, [lambda, lambda]);
        for (x, o) in trace.final_x.iter().zip(oracle) {
            ensure!(
                (x - o).abs() <= 1e-8 * o.abs().max(1.0),
                "{case} lambda {lambda}: {x} vs oracle {o}"
            );
        }
        details.push(format!(
            "{case} lambda {lambda}: ({:.9}, {:.9})",
            oracle[0], oracle[1]
        ));
    }
    Ok(details.join("; "))
}

fn pruning_refusal() -> Outcome {
    let problem = motivating_system(MotivatingCase::B01).problem();
    let sub = linearize(&problem, &DVector::zeros(2)).map_err(err)?;
    let pruned = prune_columns(&sub, 0.3).ok_or("residual is zero")?;
    ensure!(
        pruned.kept_indices.is_empty(),
        "kept {:?}",
        pruned.kept_indices
    );
    let trace = solve(&problem, &SolverConfig::with_method(Method::PrunedCd)).map_err(err)?;
    ensure!(trace.final_x == vec![0.0, 0.0], "x = {:?}", trace.final_x);
    ensure!(
        trace
            .iterations
            .iter()
            .all(|r| r.kept_columns == Some(0) && r.unique_coordinates == 0 && r.step_norm == 0.0),
        "iterations {:?}",
        trace.iterations
    );
    Ok(format!(
        "correlations {:.4?}, x = (0, 0), {} outer iteration(s), {:?}",
        pruned.correlations,
        trace.outer_iterations(),
        trace.termination
    ))
}

fn single_column() -> Outcome {
    let problem = motivating_system(MotivatingCase::B51).problem();
    let config = SolverConfig {
        cd: CdConfig {
            step_size: StepSize::Greedy,
            max_unique_coordinates: 1,
            ..CdConfig::default()
        },
        ..SolverConfig::with_method(Method::PrunedCd)
    };
    let x = solve(&problem, &config).map_err(err)?.final_x;
    let expected = [5.1 / 1.01, 0.0];
    ensure!(
        (x[0] - expected[0]).abs() <= 1e-12 && (x[1] - expected[1]).abs() <= 1e-12,
        "x = {x:?}, expected {expected:?}"
    );
    Ok(format!("x = ({:.15}, {})", x[0], x[1]))
}

fn random_subproblem(rng: &mut ChaCha8Rng, max_rows: usize, max_cols: usize) -> LinearSubproblem {
    let rows = rng.random_range(1..=max_rows);
    let cols = rng.random_range(1..=max_cols);
    let jacobian = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let rhs = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
    LinearSubproblem {
        jacobian,
        rhs,
        base_point: DVector::zeros(cols),
    }
}

fn gs_reduction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut selections = 0;
    for problem in 0..200 {
        let sub = random_subproblem(&mut rng, 50, 150);
        let kept: Vec<usize> = (0..sub.column_count()).collect();
        for taken in [StepSize::Greedy, StepSize::Fixed(0.05)] {
            let base = CdConfig {
                step_size: taken,
                max_unique_coordinates: 150,
                min_rel_decrease: 0.0,
                max_inner_iterations: 200,
                ..CdConfig::default()
            };
            let ours = CdConfig {
                rule: ColumnRule::Ours,
                selection_step_size: SelectionStep::Greedy,
                ..base.clone()
            };
            let gs = CdConfig {
                rule: ColumnRule::GaussSouthwell,
                ..base
            };
            let a: Vec<usize> = cd_solve(&sub, &kept, &ours)
                .map_err(err)?
                .inner_trace
                .iter()
                .map(|s| s.column)
                .collect();
            let b: Vec<usize> = cd_solve(&sub, &kept, &gs)
                .map_err(err)?
                .inner_trace
                .iter()
                .map(|s| s.column)
                .collect();
            ensure!(
                a == b,
                "problem {problem} ({taken}): sequences differ\n ours {a:?}\n gs   {b:?}"
            );
            selections += a.len();
        }
    }
    Ok(format!(
        "200 problems x 2 taken steps, {selections} identical selections"
    ))
}

fn cd_configs() -> Vec<CdConfig> {
    let mut out = Vec::new();
    for rule in [
        ColumnRule::Ours,
        ColumnRule::GaussSouthwell,
        ColumnRule::Mbi,
    ] {
        for step in [
            StepSize::Greedy,
            StepSize::Fixed(0.01),
            StepSize::Fixed(0.3),
        ] {
            for selection in [
                SelectionStep::SameAsTaken,
                SelectionStep::Fixed(0.01),
                SelectionStep::Greedy,
            ] {
                for (limits, trust) in [
                    (false, None),
                    (true, None),
                    (false, Some(0.5)),
                    (true, Some(0.2)),
                ] {
                    out.push(CdConfig {
                        rule,
                        step_size: step,
                        selection_step_size: selection,
                        max_unique_coordinates: 20,
                        min_rel_decrease: 0.0,
                        max_inner_iterations: 60,
                        parameter_min: limits.then_some(Bound::Scalar(-0.4)),
                        parameter_max: limits.then_some(Bound::Scalar(0.6)),
                        trust_radius: trust,
                    });
                }
            }
        }
    }
    out
}

/// Replays the inner steps of one solve, recomputing the residual from scratch.
fn replay_norms(sub: &LinearSubproblem, steps: &[sparse_gn::cdsolve::InnerStep]) -> Vec<f64> {
    let mut delta = DVector::zeros(sub.column_count());
    steps
        .iter()
        .map(|s| {
            delta[s.column] += s.sign * s.alpha;
            (&sub.rhs - &sub.jacobian * &delta).norm()
        })
        .collect()
}

fn monotone_inner() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut subs = Vec::new();
    for _ in 0..40 {
        subs.push(random_subproblem(&mut rng, 40, 60));
    }
    for seed in 0..2 {
        let scene = generate_scene(&SceneSpec {
            seed,
            ..SceneSpec::default()
        })
        .map_err(err)?;
        let problem = scene
            .problem(&scene.target(0.01, seed).map_err(err)?)
            .map_err(err)?;
        let w = DVector::from_fn(scene.parameter_count(), |_, _| rng.random_range(0.0..0.5));
        subs.push(linearize(&problem, &w).map_err(err)?);
    }
    let configs = cd_configs();
    let mut steps = 0usize;
    let mut worst = 0.0f64;
    for (k, sub) in subs.iter().enumerate() {
        let kept: Vec<usize> = (0..sub.column_count())
            .filter(|&c| sub.jacobian.column(c).norm() > 0.0)
            .collect();
        for config in &configs {
            let result = cd_solve(sub, &kept, config).map_err(err)?;
            let r0 = result.initial_residual_norm;
            let mut prev = r0;
            for (i, (step, norm)) in result
                .inner_trace
                .iter()
                .zip(replay_norms(sub, &result.inner_trace))
                .enumerate()
            {
                let increase = (norm - prev) / r0;
                worst = worst.max(increase);
                ensure!(
                    increase <= 1e-12,
                    "subproblem {k} step {i}: |r| rose {prev} -> {norm} with {config:?}"
                );
                ensure!(
                    step.alpha > 0.0 && (step.residual_norm - norm).abs() <= 1e-9 * r0,
                    "subproblem {k} step {i}: reported |r| {} vs recomputed {norm}",
                    step.residual_norm
                );
                prev = norm;
            }
            steps += result.inner_trace.len();
        }
    }
    ensure!(steps >= 10_000, "only {steps} steps sampled");
    Ok(format!(
        "{steps} steps over {} solves, largest relative rise {worst:.1e}",
        subs.len() * configs.len()
    ))
}

fn table() -> &'static (Result<TableReport, String>, Duration) {
    static TABLE: OnceLock<(Result<TableReport, String>, Duration)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let t0 = Instant::now();
        let report = ExperimentConfig::default()
            .resolve()
            .and_then(|r| run_table_experiment(&r, Execution::default()))
            .map_err(|e| format!("{e:#}"));
        (report, t0.elapsed())
    })
}

fn recovery_trend() -> Outcome {
    let (report, elapsed) = table();
    let report = report.as_ref().map_err(Clone::clone)?;
    ensure!(
        report.resolved.seeds.len() >= 5,
        "only {} seeds",
        report.resolved.seeds.len()
    );
    let failures: usize = report.aggregates().iter().map(|a| a.failures).sum();
    ensure!(failures == 0, "{failures} failed runs");
    let agg = |m, n| report.aggregate(m, n).expect("aggregate");

    let dogleg = agg(Method::Dogleg, 0.01).l2_error;
    let ours = agg(Method::PrunedCd, 0.01).l2_error;
    ensure!(
        ours * 3.0 < dogleg,
        "(a) pruned L2 {ours} vs dogleg {dogleg} at noise 0.01"
    );

    let baselines = [Method::Dogleg, Method::DoglegL2, Method::BfgsSoftL1];
    let mut l0 = Vec::new();
    for &noise in &report.resolved.noise_levels {
        let ours = agg(Method::PrunedCd, noise).l0_zeros;
        for m in baselines {
            let theirs = agg(m, noise).l0_zeros;
            ensure!(
                ours > theirs,
                "(b) noise {noise}: pruned l0 {ours} vs {m} {theirs}"
            );
        }
        l0.push(format!("{ours:.1}"));
    }

    let pooled = |m: Method| {
        let v: Vec<f64> = report
            .resolved
            .noise_levels
            .iter()
            .map(|&n| agg(m, n).gini)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let ours_gini = pooled(Method::PrunedCd);
    let mut gini_notes = Vec::new();
    for m in baselines {
        let theirs = pooled(m);
        ensure!(
            ours_gini >= theirs,
            "(c) pruned mean gini {ours_gini} vs {m} {theirs}"
        );
        gini_notes.push(format!("{m} {theirs:.3}"));
    }
    let per_level: Vec<String> = report
        .resolved
        .noise_levels
        .iter()
        .map(|&n| {
            format!(
                "{n}: {:.3} vs dogleg {:.3}",
                agg(Method::PrunedCd, n).gini,
                agg(Method::Dogleg, n).gini
            )
        })
        .collect();
    ensure!(*elapsed < Duration::from_secs(30), "table took {elapsed:?}");
    Ok(format!(
        "(a) L2 at 0.01 pruned {ours:.4} vs dogleg {dogleg:.1}; (b) pruned l0 {}; (c) mean gini pruned {ours_gini:.3} vs {} [per level {}]; {elapsed:.2?}",
        l0.join("/"),
        gini_notes.join(", "),
        per_level.join(", ")
    ))
}

fn noise_robustness() -> Outcome {
    let (report, _) = table();
    let report = report.as_ref().map_err(Clone::clone)?;
    let l2 = |m, n| report.aggregate(m, n).expect("aggregate").l2_error;
    let (d0, d1) = (l2(Method::Dogleg, 0.0), l2(Method::Dogleg, 0.01));
    let (p0, p1) = (l2(Method::PrunedCd, 0.0), l2(Method::PrunedCd, 0.01));
    ensure!(d1 >= 2.0 * d0, "dogleg L2 {d0} -> {d1}");
    ensure!(p1 <= 1.5 * p0, "pruned L2 {p0} -> {p1}");
    Ok(format!(
        "dogleg {d0:.2e} -> {d1:.2}; pruned {p0:.4} -> {p1:.4} ({:.2}x)",
        p1 / p0
    ))
}

/// Integer masses `v` scaled so both histograms carry `sa * sb` units.
struct Hist {
    mass: Vec<i64>,
    total: i64,
    floats: Vec<f64>,
}

fn all_vectors(k: usize) -> Vec<Hist> {
    let mut out = Vec::new();
    let count = 5usize.pow(k as u32);
    for code in 0..count {
        let mut c = code;
        let mass: Vec<i64> = (0..k)
            .map(|_| {
                let v = (c % 5) as i64;
                c /= 5;
                v
            })
            .collect();
        let total = mass.iter().sum();
        let floats = mass.iter().map(|&m| m as f64 * 0.25).collect();
        out.push(Hist {
            mass,
            total,
            floats,
        });
    }
    out
}

const MAX_BINS: usize = 6;

/// Optimal transport cost between integer histograms of equal total, certified by
/// a feasible plan and a feasible dual of the same value.
fn certified_transport(a: &[i64], b: &[i64]) -> Result<i64, String> {
    let k = a.len();
    // primal: north-west corner plan, tracking its row and column sums
    let (mut ra, mut rb) = ([0i64; MAX_BINS], [0i64; MAX_BINS]);
    ra[..k].copy_from_slice(a);
    rb[..k].copy_from_slice(b);
    let (mut rows, mut cols) = ([0i64; MAX_BINS], [0i64; MAX_BINS]);
    let (mut i, mut j) = (0, 0);
    let mut primal = 0;
    while i < k && j < k {
        let m = ra[i].min(rb[j]);
        if m < 0 {
            return Err("negative plan entry".into());
        }
        rows[i] += m;
        cols[j] += m;
        primal += m * (i as i64 - j as i64).abs();
        ra[i] -= m;
        rb[j] -= m;
        if ra[i] == 0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    if rows[..k] != a[..] || cols[..k] != b[..] {
        return Err("infeasible plan".into());
    }
    // dual: potential with unit steps against the running surplus
    let mut phi = [0i64; MAX_BINS];
    let mut surplus = 0;
    for t in 0..k - 1 {
        surplus += a[t] - b[t];
        phi[t + 1] = phi[t] - surplus.signum();
    }
    // adjacent 1-Lipschitz steps imply phi_i - phi_j <= |i - j| for every pair
    if phi[..k].windows(2).any(|w| (w[1] - w[0]).abs() > 1) {
        return Err("infeasible dual".into());
    }
    let dual: i64 = (0..k).map(|t| phi[t] * (a[t] - b[t])).sum();
    if primal != dual {
        return Err(format!("duality gap {primal} vs {dual}"));
    }
    Ok(primal)
}

/// Transport cost by successive shortest paths on the full bipartite network.
fn min_cost_flow(a: &[i64], b: &[i64]) -> i64 {
    let k = a.len();
    let n = 2 * k + 2;
    let (s, t) = (2 * k, 2 * k + 1);
    // edges: (to, capacity, cost, reverse index)
    let mut graph: Vec<Vec<(usize, i64, i64, usize)>> = vec![Vec::new(); n];
    let add =
        |g: &mut Vec<Vec<(usize, i64, i64, usize)>>, u: usize, v: usize, cap: i64, cost: i64| {
            let (ru, rv) = (g[v].len(), g[u].len());
            g[u].push((v, cap, cost, ru));
            g[v].push((u, 0, -cost, rv));
        };
    let total: i64 = a.iter().sum();
    for i in 0..k {
        add(&mut graph, s, i, a[i], 0);
        add(&mut graph, k + i, t, b[i], 0);
        for j in 0..k {
            add(&mut graph, i, k + j, total, (i as i64 - j as i64).abs());
        }
    }
    let mut cost = 0;
    let mut flow = 0;
    while flow < total {
        let mut dist = vec![i64::MAX; n];
        let mut prev = vec![(usize::MAX, usize::MAX); n];
        dist[s] = 0;
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == i64::MAX {
                    continue;
                }
                for (e, &(v, cap, c, _)) in graph[u].iter().enumerate() {
                    if cap > 0 && dist[u] + c < dist[v] {
                        dist[v] = dist[u] + c;
                        prev[v] = (u, e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut push = i64::MAX;
        let mut v = t;
        while v != s {
            let (u, e) = prev[v];
            push = push.min(graph[u][e].1);
            v = u;
        }
        let mut v = t;
        while v != s {
            let (u, e) = prev[v];
            graph[u][e].1 -= push;
            let r = graph[u][e].3;
            graph[v][r].1 += push;
            v = u;
        }
        flow += push;
        cost += push * dist[t];
    }
    cost
}

fn scaled(a: &Hist, b: &Hist) -> ([i64; MAX_BINS], [i64; MAX_BINS]) {
    let (mut sa, mut sb) = ([0i64; MAX_BINS], [0i64; MAX_BINS]);
    for t in 0..a.mass.len() {
        sa[t] = a.mass[t] * b.total;
        sb[t] = b.mass[t] * a.total;
    }
    (sa, sb)
}

fn metric_identities() -> Outcome {
    for n in [2usize, 10, 150] {
        let g = gini(&vec![0.37; n]).value;
        ensure!(g.abs() <= 1e-12, "gini(uniform, {n}) = {g}");
        let mut one_hot = vec![0.0; n];
        one_hot[n - 1] = 2.0;
        let g = gini(&one_hot).value;
        ensure!(
            (g - (1.0 - 1.0 / n as f64)).abs() <= 1e-12,
            "gini(one-hot, {n}) = {g}"
        );
    }

    let mut pairs = 0u64;
    let mut flows = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 1..=MAX_BINS {
        let vectors = all_vectors(k);
        for a in &vectors {
            for b in &vectors {
                let got = emd_error(&a.floats, &b.floats).map_err(err)?;
                match (a.total > 0, b.total > 0) {
                    (false, false) => {
                        ensure!(got.value == 0.0 && got.degenerate, "both zero: {got:?}")
                    }
                    (true, false) | (false, true) => {
                        ensure!(
                            got.value == k as f64 && got.degenerate,
                            "zero mass vs {:?}: {got:?}",
                            a.mass
                        )
                    }
                    (true, true) => {
                        let (sa, sb) = scaled(a, b);
                        let (sa, sb) = (&sa[..k], &sb[..k]);
                        let units = certified_transport(sa, sb)
                            .map_err(|e| format!("{:?} vs {:?}: {e}", a.mass, b.mass))?;
                        let exact = units as f64 / (a.total * b.total) as f64;
                        ensure!(
                            (got.value - exact).abs() <= 1e-12 && !got.degenerate,
                            "{:?} vs {:?}: {} vs optimal {exact}",
                            a.mass,
                            b.mass,
                            got.value
                        );
                        if k <= 3 || rng.random_range(0..20_000) == 0 {
                            let flow = min_cost_flow(sa, sb);
                            ensure!(
                                flow == units,
                                "{:?} vs {:?}: min-cost flow {flow} vs {units}",
                                a.mass,
                                b.mass
                            );
                            flows += 1;
                        }
                    }
                }
                pairs += 1;
            }
        }
    }
    Ok(format!(
        "gini identities hold for N = 2, 10, 150; {pairs} EMD pairs over 1..6 bins match certified optimal transport ({flows} also by min-cost flow)"
    ))
}

fn central_difference<P: Problem>(problem: &P, x: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(problem.residual_count(), x.len());
    for c in 0..x.len() {
        let h = 1e-6 * x[c].abs().max(1.0);
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[c] += h;
        xm[c] -= h;
        let d = (problem.evaluate(&xp) - problem.evaluate(&xm)) / (2.0 * h);
        out.set_column(c, &d);
    }
    out
}

fn check_jacobian<P: Problem>(
    problem: &P,
    points: &[DVector<f64>],
    label: &str,
) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for x in points {
        let fd = central_difference(problem, x);
        let rel = (problem.jacobian(x) - &fd).norm() / fd.norm().max(1e-300);
        ensure!(rel <= 1e-5, "{label}: relative error {rel:e}");
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn jacobian_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut notes = Vec::new();
    for case in [MotivatingCase::B01, MotivatingCase::B51] {
        let problem = motivating_system(case).problem();
        let points: Vec<_> = (0..20)
            .map(|_| DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0)))
            .collect();
        notes.push(format!(
            "{case} {:.1e}",
            check_jacobian(&problem, &points, &case.to_string())?
        ));
    }
    for (seed, noise) in [(0u64, 0.0), (1, 0.01)] {
        let scene = generate_scene(&SceneSpec {
            seed,
            ..SceneSpec::default()
        })
        .map_err(err)?;
        let problem = scene
            .problem(&scene.target(noise, seed).map_err(err)?)
            .map_err(err)?;
        let points: Vec<_> = (0..20)
            .map(|_| DVector::from_fn(scene.parameter_count(), |_, _| rng.random_range(-1.5..1.5)))
            .collect();
        notes.push(format!(
            "scene {seed} {:.1e}",
            check_jacobian(&problem, &points, "curve matching")?
        ));
    }
    Ok(format!(
        "20 points each, worst relative error: {}",
        notes.join(", ")
    ))
}

fn constrained_experiment() -> Result<sparse_gn_cli::ResolvedExperiment, String> {
    let cfg = ExperimentConfig::from_toml(
        "[solver]\ncd.parameter_min = 0.0\ncd.parameter_max = 1.0\ncd.trust_radius = 0.05\n",
    )
    .map_err(|e| format!("{e:#}"))?;
    cfg.resolve().map_err(|e| format!("{e:#}"))
}

fn box_and_trust() -> Outcome {
    let resolved = constrained_experiment()?;
    let mu = 0.05;
    let (mut iterates, mut steps, mut at_bound, mut longest) = (0usize, 0usize, 0usize, 0.0f64);
    for kind in SweepKind::ALL {
        let report =
            run_sweep(kind, &resolved, Execution::default()).map_err(|e| format!("{e:#}"))?;
        for cell in &report.cells {
            let trace = cell
                .result
                .as_ref()
                .map_err(|e| format!("{kind} {}: {e}", cell.setting))?;
            for s in &trace.snapshots {
                ensure!(
                    s.x.iter().all(|v| (0.0..=1.0).contains(v)),
                    "{kind} {} seed {}: iterate leaves the box",
                    cell.setting,
                    cell.seed
                );
                at_bound += s.x.iter().filter(|v| **v == 1.0).count();
                iterates += 1;
            }
            for w in trace.snapshots.windows(2) {
                let step = w[0]
                    .x
                    .iter()
                    .zip(&w[1].x)
                    .map(|(a, b)| (b - a).powi(2))
                    .sum::<f64>()
                    .sqrt();
                ensure!(
                    step <= mu * (1.0 + 1e-12),
                    "{kind} {}: step {step} exceeds {mu}",
                    cell.setting
                );
                longest = longest.max(step);
                steps += (step > 0.0) as usize;
            }
        }
    }
    ensure!(steps > 0, "no step was taken");
    Ok(format!(
        "{iterates} iterates inside [0, 1] ({at_bound} entries at the upper bound), {steps} nonzero steps, longest {longest:.6}"
    ))
}

fn selection_trend() -> Outcome {
    let resolved = ExperimentConfig::default()
        .resolve()
        .map_err(|e| format!("{e:#}"))?;
    let report = run_sweep(SweepKind::SelectionStep, &resolved, Execution::default())
        .map_err(|e| format!("{e:#}"))?;
    let ours = report.mean_trace("ours_0.01", 0.0);
    let gs = report.mean_trace("gs", 0.0);
    ensure!(
        ours.len() >= 4 && gs.len() >= 4,
        "traces too short: {ours:?} {gs:?}"
    );
    // the trace value for outer iteration k is the residual before that iteration
    for k in 0..3 {
        ensure!(
            ours[k] <= gs[k],
            "before iteration {}: ours {} > gs {}",
            k + 1,
            ours[k],
            gs[k]
        );
    }
    let show = |t: &[f64]| {
        t[..4]
            .iter()
            .map(|v| format!("{v:.5}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Ok(format!(
        "seed-mean |f| before iterations 1-3 (and after 3): ours {} vs gs {}",
        show(&ours),
        show(&gs)
    ))
}
