//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use kstep_pg::experiments::runner::verify;
use kstep_pg::experiments::{build_example, check_golden, golden, Example, EXAMPLE_NAMES};
use kstep_pg::landscape::{certify_critical_model, chained_policy_control, theta_sweep, uniform_grid};
use kstep_pg::optim::{near_optimality_bound, performance_gap_model, MONOTONE_TOL};
use kstep_pg::{
    descent_run, kstep_q_correlated, CorrelatedPolicy, KStepModel, Method, OccupancyWeighting, OptimizerConfig,
    StepSize,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = (bool, String);

fn examples() -> Vec<Example> {
    EXAMPLE_NAMES.iter().map(|n| build_example(n).unwrap()).collect()
}

fn vertex(n: usize, i: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[i] = 1.0;
    w
}

fn golden_tables(name: &str) -> Outcome {
    let ex = build_example(name).unwrap();
    let checks = check_golden(&ex, golden(name).unwrap()).unwrap();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .flat_map(|c| c.failures().map(move |f| format!("{}: {f}", c.table)))
        .collect();
    let cells: usize = checks.iter().map(|c| c.cells.len()).sum();
    if failed.is_empty() {
        (true, format!("{} tables, {cells} cells within tolerance", checks.len()))
    } else {
        (false, failed.join("; "))
    }
}

fn two_state_sweeps() -> Outcome {
    let ex = build_example("two_state").unwrap();
    let grid = uniform_grid(0.001).unwrap();
    let last = grid.len() - 1;
    let (a, b) = (ex.crit_index(), ex.star_index());
    let k1 = theta_sweep(&ex.mdp, &ex.class, a, b, 1, &grid).unwrap();
    let minima = k1.local_minima();
    let maxima: Vec<usize> = k1.local_maxima().into_iter().filter(|&i| i != 0 && i != last).collect();
    let ends_are_minima = minima.contains(&0) && minima.contains(&last);
    let peak = maxima.first().map(|&i| grid[i]);
    let peak_ok = maxima.len() == 1 && (peak.unwrap() - 0.32).abs() <= 0.02;
    let k3 = theta_sweep(&ex.mdp, &ex.class, a, b, 3, &grid).unwrap();
    let sloped = k3.interior_stationary().is_empty() && k3.forward_difference_at_start() < 0.0;
    let k100 = theta_sweep(&ex.mdp, &ex.class, a, b, 100, &grid).unwrap();
    let bound = 2.0 * 0.8f64.powi(100) * ex.mdp.g_max() / 0.2;
    let affine = k100.chord_deviation() <= bound;
    (
        ends_are_minima && peak_ok && sloped && affine,
        format!(
            "k=1 minima at ends: {ends_are_minima}, interior max at {peak:?}; k=3 sloped: {sloped}; k=100 chord deviation {:.2e} <= {bound:.2e}",
            k100.chord_deviation()
        ),
    )
}

fn dirac_invariance() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for ex in examples() {
        let direct: Vec<_> = ex.class.policies().par_iter().map(|p| ex.mdp.evaluate_policy(p).unwrap()).collect();
        for k in [1, 2, 5, 17, 100] {
            let model = KStepModel::new(&ex.mdp, ex.class.clone(), k).unwrap();
            let m = ex.class.len();
            let err = (0..m)
                .into_par_iter()
                .map(|i| (model.evaluate(&vertex(m, i)).unwrap().values() - &direct[i]).amax())
                .reduce(|| 0.0, f64::max);
            worst = worst.max(err);
            count += m;
        }
    }
    (worst <= 1e-9, format!("{count} (policy, k) pairs, max |J^(dirac,k) - J| = {worst:.2e}"))
}

fn gradient_dominance() -> Outcome {
    let worst = (0..10_000u64)
        .into_par_iter()
        .map(|seed| {
            let inst = common::random_instance(seed, 5);
            KStepModel::new(&inst.mdp, inst.class.clone(), inst.k)
                .unwrap()
                .gradient_dominance_residual(&inst.w, &inst.w2)
                .unwrap()
        })
        .reduce(|| f64::INFINITY, f64::min);
    (worst >= -1e-9, format!("10^4 instances, min residual {worst:.3e}"))
}

fn performance_difference() -> Outcome {
    let worst = (0..1_000u64)
        .into_par_iter()
        .map(|seed| {
            let inst = common::random_instance(seed + 1_000_000, 5);
            let model = KStepModel::new(&inst.mdp, inst.class.clone(), inst.k).unwrap();
            let e1 = model.evaluate(&inst.w).unwrap();
            let e2 = model.evaluate(&inst.w2).unwrap();
            let p1 = CorrelatedPolicy::new(inst.class.clone(), inst.w.clone()).unwrap();
            let p2 = CorrelatedPolicy::new(inst.class.clone(), inst.w2.clone()).unwrap();
            let adv = kstep_q_correlated(&inst.mdp, &p1, inst.k, &p2).unwrap() - e1.values();
            let gk = inst.mdp.gamma().powi(inst.k as i32);
            (e1.value_at_mu() - e2.value_at_mu() + e2.occupancy().dot(&adv) / (1.0 - gk)).abs()
        })
        .reduce(|| 0.0, f64::max);
    (worst <= 1e-8, format!("10^3 instances, max |residual| {worst:.3e}"))
}

fn occupancy_tv() -> Outcome {
    let mut worst_slack = f64::INFINITY;
    for ex in examples() {
        let m = ex.class.len();
        let points = [
            vertex(m, ex.crit_index()),
            vertex(m, ex.star_index()),
            vec![1.0 / m as f64; m],
        ];
        for k in 1..=10 {
            let model = KStepModel::new(&ex.mdp, ex.class.clone(), k).unwrap();
            for w in &points {
                let d = model.evaluate(w).unwrap().occupancy().clone();
                let tv = (d - ex.mdp.mu()).abs().sum();
                worst_slack = worst_slack.min(2.0 * ex.mdp.gamma().powi(k as i32) - tv);
            }
        }
    }
    let random = (0..1_000u64)
        .into_par_iter()
        .map(|seed| {
            let inst = common::random_instance(seed + 2_000_000, 5);
            let model = KStepModel::new(&inst.mdp, inst.class.clone(), inst.k).unwrap();
            let d = model.evaluate(&inst.w).unwrap().occupancy().clone();
            2.0 * inst.mdp.gamma().powi(inst.k as i32) - (d - inst.mdp.mu()).abs().sum()
        })
        .reduce(|| f64::INFINITY, f64::min);
    let slack = worst_slack.min(random);
    (slack >= -1e-12, format!("examples k=1..10 and 10^3 random instances, min slack {slack:.3e}"))
}

fn finite_differences() -> Outcome {
    let mut failures = 0;
    let mut total = 0;
    for ex in examples() {
        let k = golden(ex.name).unwrap().k_esc.unwrap();
        let model = KStepModel::new(&ex.mdp, ex.class.clone(), k).unwrap();
        let m = ex.class.len();
        failures += (0..100u64)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = ChaCha8Rng::seed_from_u64(i);
                let w = common::interior_weights(&mut rng, m);
                let target = common::interior_weights(&mut rng, m);
                let analytic = model.gradient(&w).unwrap().directional(&target).unwrap();
                let h = 1e-6;
                let at = |t: f64| {
                    let p: Vec<f64> = w.iter().zip(&target).map(|(a, b)| a + t * (b - a)).collect();
                    model.value_at_mu(&p).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                (fd - analytic).abs() > 1e-6f64.max(1e-4 * analytic.abs())
            })
            .count();
        total += 100;
    }
    (failures == 0, format!("{total} interior points, {failures} disagreements"))
}

fn critical_point_gaps() -> Outcome {
    let mut certified = 0;
    let mut worst_margin = f64::INFINITY;
    for ex in examples() {
        let m = ex.class.len();
        // every vertex of the small classes, the designated pair elsewhere
        let candidates: Vec<usize> = if m <= 64 { (0..m).collect() } else { vec![ex.crit_index(), ex.star_index()] };
        for k in 1..=10 {
            let model = KStepModel::new(&ex.mdp, ex.class.clone(), k).unwrap();
            let found: Vec<f64> = candidates
                .par_iter()
                .filter_map(|&i| {
                    let w = vertex(m, i);
                    let r = certify_critical_model(&model, &w, 1e-9, OccupancyWeighting::KStep).unwrap();
                    r.certified.then(|| {
                        let gap = performance_gap_model(&model, &w).unwrap();
                        gap.bound + 1e-9 - gap.one_step_gap.max(gap.kstep_gap)
                    })
                })
                .collect();
            certified += found.len();
            worst_margin = found.into_iter().fold(worst_margin, f64::min);
        }
    }
    (
        certified > 0 && worst_margin >= 0.0,
        format!("{certified} certified critical vertices, min margin to bound {worst_margin:.3}"),
    )
}

fn end_to_end_descent() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for ex in examples() {
        let k = golden(ex.name).unwrap().k_esc.unwrap();
        let model = KStepModel::new(&ex.mdp, ex.class.clone(), k).unwrap();
        let w0 = vertex(ex.class.len(), ex.crit_index());
        let bound = near_optimality_bound(&ex.mdp, k);
        for method in [Method::ProjectedGd, Method::MirrorEntropy] {
            let config = OptimizerConfig {
                max_iters: 2000,
                keep_vectors: false,
                target: Some(ex.star_index()),
                ..OptimizerConfig::new(method, k)
            };
            let trace = descent_run(&model, &w0, &config).unwrap();
            let gap = trace.last().gap;
            ok &= gap <= bound && trace.records.len() <= 2001;
            details.push(format!("{}/{} gap {gap:.3}", ex.name, method.short_name()));
        }
    }
    let nm = build_example("number_matching").unwrap();
    let model = KStepModel::new(&nm.mdp, nm.class.clone(), 1).unwrap();
    let w0 = vertex(nm.class.len(), nm.crit_index());
    let config = OptimizerConfig {
        max_iters: 100,
        stop_tol: 0.0,
        ..OptimizerConfig::new(Method::ProjectedGd, 1)
    };
    let trace = descent_run(&model, &w0, &config).unwrap();
    let stalled = trace.records.len() == 101 && trace.records.iter().all(|r| r.weights.as_deref() == Some(&w0[..]));
    ok &= stalled;
    details.push(format!("number_matching k=1 pgd stalled for 100 iterations: {stalled}"));
    (ok, details.join(", "))
}

fn mirror_monotone() -> Outcome {
    let mut traces = 0;
    let mut violations = 0;
    for ex in examples() {
        let g = golden(ex.name).unwrap();
        for k in [1, g.k_esc.unwrap()] {
            let model = KStepModel::new(&ex.mdp, ex.class.clone(), k).unwrap();
            let w0 = vertex(ex.class.len(), ex.crit_index());
            let config = OptimizerConfig {
                max_iters: 2000,
                keep_vectors: false,
                step: StepSize::Certified,
                ..OptimizerConfig::new(Method::MirrorEntropy, k)
            };
            violations += descent_run(&model, &w0, &config).unwrap().monotone_violations(MONOTONE_TOL);
            traces += 1;
        }
    }
    let random: usize = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let inst = common::random_instance(seed + 3_000_000, 5);
            let model = KStepModel::new(&inst.mdp, inst.class.clone(), inst.k).unwrap();
            let config = OptimizerConfig {
                max_iters: 200,
                probes: 16,
                seed,
                keep_vectors: false,
                ..OptimizerConfig::new(Method::MirrorEntropy, inst.k)
            };
            descent_run(&model, &inst.w, &config).unwrap().monotone_violations(MONOTONE_TOL)
        })
        .sum();
    traces += 200;
    violations += random;
    (violations == 0, format!("{traces} certified mirror traces, {violations} increases beyond 1e-10"))
}

fn chained_control() -> Outcome {
    let ex = build_example("two_state").unwrap();
    let grid = uniform_grid(0.01).unwrap();
    let (a, b) = (ex.class.policy(ex.crit_index()), ex.class.policy(ex.star_index()));
    let mut parts = Vec::new();
    let mut ok = true;
    for k in [3, 10] {
        let c = chained_policy_control(&ex.mdp, a, b, k, &grid).unwrap();
        let min = c.forward_differences.iter().copied().fold(f64::INFINITY, f64::min);
        ok &= c.zero_point_persists();
        parts.push(format!("k={k} min forward difference {min:.4}"));
    }
    (ok, parts.join(", "))
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn deterministic_verify() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, threads: usize| {
        let out = dir.path().join(sub);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let summary = pool.install(|| verify(Some(&out), 7)).unwrap();
        (summary.passed(), read_tree(&out))
    };
    let (pass_a, a) = run("a", 1);
    let (pass_b, b) = run("b", 4);
    let same = a == b;
    (
        same && pass_a && pass_b && !a.is_empty(),
        format!("{} files, identical across 1 and 4 threads: {same}", a.len()),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 15] = [
        ("two-state sweep shapes", two_state_sweeps),
        ("number matching tables", || golden_tables("number_matching")),
        ("button press tables", || golden_tables("button_press")),
        ("moat cross tables", || golden_tables("moat_cross")),
        ("two path tables", || golden_tables("two_path")),
        ("dirac invariance", dirac_invariance),
        ("approximate gradient dominance", gradient_dominance),
        ("k-step performance difference", performance_difference),
        ("occupancy total variation", occupancy_tv),
        ("gradient vs finite differences", finite_differences),
        ("gap at certified critical points", critical_point_gaps),
        ("descent reaches the bound; k=1 stalls", end_to_end_descent),
        ("mirror descent monotone", mirror_monotone),
        ("chained-policy control", chained_control),
        ("deterministic verify output", deterministic_verify),
    ];
    let mut failed = Vec::new();
    let mut stdout = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        let status = if ok { "PASS" } else { "FAIL" };
        writeln!(stdout, "[{status}] criterion {:>2} {name}: {detail}", i + 1).unwrap();
        if !ok {
            failed.push(i + 1);
        }
    }
    stdout.flush().unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn certified_points_include_the_designated_ones_at_k1() {
    for ex in examples() {
        let model = KStepModel::new(&ex.mdp, ex.class.clone(), 1).unwrap();
        let w = vertex(ex.class.len(), ex.crit_index());
        let r = certify_critical_model(&model, &w, 1e-9, OccupancyWeighting::KStep).unwrap();
        assert!(r.certified, "{}", ex.name);
    }
}
