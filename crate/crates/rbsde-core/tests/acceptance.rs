//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with
//! `cargo test -p rbsde-core --test acceptance -- --nocapture`.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rbsde_core::analysis::{
    check_apriori, check_comparison, check_skorokhod, class_d_by_stopping_enumeration,
    class_d_norm, convergence_metrics, norms,
};
use rbsde_core::bsde::{snell_envelope, Method, Solution};
use rbsde_core::driver::SolveOptions;
use rbsde_core::report::{solution_csv, to_json};
use rbsde_core::scenarios::{
    crr_oracle, divergence_probe, make_instance, DivergenceKind, ScenarioSpec,
};
use rbsde_core::{
    penalization_sweep, solve_penalized, solve_reflected, Driver, Instance, NodeField, PathPlan,
};

const SWEEP_SCHEDULE: [f64; 5] = [4.0, 16.0, 64.0, 256.0, 1024.0];

fn verdict(name: &str, ok: bool, detail: &str) -> bool {
    println!(
        "acceptance {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn american_put(rate: f64, steps: usize) -> Instance {
    make_instance(&ScenarioSpec::AmericanPut {
        rate,
        sigma: 0.2,
        strike: 100.0,
        spot: 100.0,
        horizon: 1.0,
        steps,
    })
    .expect("standard put instance")
}

/// Oracle equivalence: the reflected solve and the independent binomial
/// pricer value the same put to 1e-9 at zero rate and to 5e-3 at r = 0.05.
#[test]
fn criterion_1_oracle_equivalence() {
    let opts = SolveOptions::default();
    let start = Instant::now();

    let solver_r0 = solve_reflected(&american_put(0.0, 200), &opts).unwrap().price();
    let oracle_r0 = crr_oracle(0.0, 0.2, 100.0, 100.0, 1.0, 200).unwrap();
    let gap_r0 = (solver_r0 - oracle_r0).abs();

    let solver_r5 = solve_reflected(&american_put(0.05, 200), &opts).unwrap().price();
    let oracle_r5 = crr_oracle(0.05, 0.2, 100.0, 100.0, 1.0, 200).unwrap();
    let gap_r5 = (solver_r5 - oracle_r5).abs();

    let elapsed = start.elapsed();
    let ok = gap_r0 <= 1e-9 && gap_r5 <= 5e-3 && elapsed.as_secs_f64() < 2.0;
    assert!(
        verdict(
            "1 oracle-equivalence",
            ok,
            &format!(
                "r=0 gap {gap_r0:.3e} <= 1e-9, r=0.05 gap {gap_r5:.3e} <= 5e-3, {:.2?} < 2s",
                elapsed
            )
        ),
        "solver {solver_r0} vs oracle {oracle_r0}; solver {solver_r5} vs oracle {oracle_r5}"
    );
}

/// Penalization convergence: the max-node gap to the reflected reference
/// decreases strictly along the schedule and drops by at least 10x overall.
#[test]
fn criterion_2_penalization_convergence() {
    let opts = SolveOptions::default();
    let start = Instant::now();
    let inst = american_put(0.05, 100);
    let sweep = penalization_sweep(&inst, &SWEEP_SCHEDULE, &opts).unwrap();
    let gaps: Vec<f64> = sweep
        .levels
        .iter()
        .map(|sol| sol.y.max_abs_diff(&sweep.reference.y).unwrap())
        .collect();
    let elapsed = start.elapsed();

    let strictly_decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let tenfold = gaps[gaps.len() - 1] <= gaps[0] / 10.0;
    let ok = strictly_decreasing && tenfold && elapsed.as_secs_f64() < 10.0;
    assert!(
        verdict(
            "2 penalization-convergence",
            ok,
            &format!("gaps {gaps:?}, {:.2?} < 10s", elapsed)
        ),
        "gap sequence {gaps:?}"
    );
}

fn randomized_monotone_instance(seed: u64, steps: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: f64 = rng.random_range(-2.0..=0.5);
    let lam: f64 = rng.random_range(-1.0..=1.0);
    let c0: f64 = rng.random_range(-1.0..=1.0);
    let cubic: f64 = rng.random_range(0.0..=1.0);
    let q0: f64 = rng.random_range(-1.0..=1.0);
    let q1: f64 = rng.random_range(-1.0..=1.0);
    let q2: f64 = rng.random_range(-0.5..=0.5);
    let gap0: f64 = rng.random_range(0.0..=1.0);
    let gap1: f64 = rng.random_range(0.0..=1.0);

    let lattice = rbsde_core::build_lattice(rbsde_core::LatticeSpec::new(1.0, steps).unwrap())
        .unwrap();
    let driver = Driver::new(
        format!("random-monotone(seed={seed})"),
        mu,
        lam.abs(),
        move |_t, _b, y, z| mu * y - cubic * y * y * y + lam * z + c0,
    )
    .unwrap();
    let terminal = move |b: f64| q0 + q1 * b + q2 * b * b;
    let barrier = move |t: f64, b: f64| terminal(b) - gap0 - gap1 * (1.0 - t);
    Instance::new(
        format!("random-monotone(seed={seed})"),
        lattice,
        driver,
        terminal,
        Some(Arc::new(barrier)),
    )
    .unwrap()
}

fn monotonicity_violations(levels: &[Solution], tol: f64) -> usize {
    let mut violations = 0;
    for pair in levels.windows(2) {
        for (i, j, coarse) in pair[0].y.iter_nodes() {
            if coarse > pair[1].y.at(i, j) + tol {
                violations += 1;
            }
        }
    }
    violations
}

/// Monotone convergence in the penalty level: coarser penalties never exceed
/// finer ones, node-wise, on three scenarios.
#[test]
fn criterion_3_monotone_in_penalty() {
    let opts = SolveOptions::default();
    let mut total = 0;
    for inst in [
        american_put(0.05, 100),
        make_instance(&ScenarioSpec::Counterexample7 {
            horizon: 1.0,
            steps: 8,
        })
        .unwrap(),
        randomized_monotone_instance(42, 12),
    ] {
        let sweep = penalization_sweep(&inst, &SWEEP_SCHEDULE, &opts).unwrap();
        total += monotonicity_violations(&sweep.levels, 1e-9);
    }
    assert!(
        verdict(
            "3 monotone-in-penalty",
            total == 0,
            &format!("{total} node violations beyond 1e-9 across 3 scenarios")
        ),
        "{total} violations"
    );
}

/// Skorokhod minimality of the reflected scheme, exact (no tolerance), on
/// every built-in scenario.
#[test]
fn criterion_4_skorokhod_minimality() {
    let opts = SolveOptions::default();
    let scenarios = [
        ScenarioSpec::american_put_default(),
        ScenarioSpec::LinearBsde {
            a: -0.5,
            b: 0.25,
            c: 0.5,
            floor: 0.0,
            horizon: 1.0,
            steps: 50,
        },
        ScenarioSpec::Counterexample5 {
            horizon: 1.0,
            steps: 16,
        },
        ScenarioSpec::Counterexample7 {
            horizon: 1.0,
            steps: 16,
        },
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for spec in &scenarios {
        let inst = make_instance(spec).unwrap();
        let sol = solve_reflected(&inst, &opts).unwrap();
        let report = check_skorokhod(&sol).unwrap();
        let exact = report.sum == 0.0 && report.barrier_violation == 0.0;
        ok &= exact;
        details.push(format!(
            "{}: sum={}, violation={}",
            spec.kind_name(),
            report.sum,
            report.barrier_violation
        ));
    }
    assert!(
        verdict("4 skorokhod-minimality", ok, &details.join("; ")),
        "{details:?}"
    );
}

fn ordered_pair(seed: u64, steps: usize) -> (Instance, Instance) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu: f64 = rng.random_range(-2.0..=0.5);
    let lam: f64 = rng.random_range(-1.5..=1.5);
    let c0: f64 = rng.random_range(-1.0..=1.0);
    let cubic: f64 = rng.random_range(0.0..=1.0);
    let driver_shift: f64 = rng.random_range(0.0..=1.0);
    let q0: f64 = rng.random_range(-1.0..=1.0);
    let q1: f64 = rng.random_range(-1.0..=1.0);
    let q2: f64 = rng.random_range(-0.5..=0.5);
    let xi_shift: f64 = rng.random_range(0.0..=1.0);
    let gap0: f64 = rng.random_range(0.0..=1.0);
    let gap1: f64 = rng.random_range(0.0..=1.0);
    let barrier_shift: f64 = rng.random_range(0.0..=xi_shift.max(f64::MIN_POSITIVE));

    let lattice = rbsde_core::build_lattice(rbsde_core::LatticeSpec::new(1.0, steps).unwrap())
        .unwrap();
    let lower_driver = Driver::new(
        format!("pair-lo(seed={seed})"),
        mu,
        lam.abs(),
        move |_t, _b, y, z| mu * y - cubic * y * y * y + lam * z + c0,
    )
    .unwrap();
    let upper_driver = Driver::new(
        format!("pair-hi(seed={seed})"),
        mu,
        lam.abs(),
        move |_t, _b, y, z| mu * y - cubic * y * y * y + lam * z + c0 + driver_shift,
    )
    .unwrap();
    let lower_terminal = move |b: f64| q0 + q1 * b + q2 * b * b;
    let upper_terminal = move |b: f64| lower_terminal(b) + xi_shift;
    let lower_barrier = move |t: f64, b: f64| lower_terminal(b) - gap0 - gap1 * (1.0 - t);
    let upper_barrier = move |t: f64, b: f64| lower_barrier(t, b) + barrier_shift;

    let lo = Instance::new(
        format!("pair-lo(seed={seed})"),
        lattice,
        lower_driver,
        lower_terminal,
        Some(Arc::new(lower_barrier)),
    )
    .unwrap();
    let hi = Instance::new(
        format!("pair-hi(seed={seed})"),
        lattice,
        upper_driver,
        upper_terminal,
        Some(Arc::new(upper_barrier)),
    )
    .unwrap();
    (lo, hi)
}

/// Comparison: ordered data produce ordered reflected solutions on 50 seeded
/// random pairs.
#[test]
fn criterion_5_comparison() {
    let opts = SolveOptions::default();
    let mut violations = 0;
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let (lo, hi) = ordered_pair(1000 + seed, 16);
        let sol_lo = solve_reflected(&lo, &opts).unwrap();
        let sol_hi = solve_reflected(&hi, &opts).unwrap();
        let report = check_comparison(&sol_lo, &sol_hi, 1e-9).unwrap();
        violations += report.violation_count;
        worst = worst.max(report.worst_violation);
    }
    assert!(
        verdict(
            "5 comparison",
            violations == 0,
            &format!("{violations} violations beyond 1e-9 over 50 pairs, worst excess {worst:.3e}")
        ),
        "{violations} violations, worst {worst}"
    );
}

/// Stopping-time norm: the envelope route equals exhaustive enumeration of
/// every adapted stopping rule, on 20 seeded random fields at N <= 4.
#[test]
fn criterion_6_class_d_oracle() {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let steps = rng.random_range(1..=4usize);
        let layers = (0..=steps)
            .map(|i| (0..=i).map(|_| rng.random_range(-2.0..=2.0)).collect())
            .collect();
        let field = NodeField::from_layers(layers).unwrap();
        let lattice =
            rbsde_core::build_lattice(rbsde_core::LatticeSpec::new(1.0, steps).unwrap()).unwrap();
        let sol = Solution {
            lattice,
            y: field,
            z: NodeField::zeros(steps.saturating_sub(1)),
            k_increments: NodeField::zeros(steps.saturating_sub(1)),
            k: NodeField::zeros(steps),
            barrier: None,
            method: Method::Plain,
            root_tol: 1e-12,
        };
        let fast = class_d_norm(&sol).unwrap();
        let slow = class_d_by_stopping_enumeration(&sol).unwrap();
        worst = worst.max((fast - slow).abs());
    }
    assert!(
        verdict(
            "6 class-d-oracle",
            worst <= 1e-12,
            &format!("worst envelope-vs-enumeration gap {worst:.3e} <= 1e-12 over 20 fields")
        ),
        "worst gap {worst}"
    );
}

/// Controlled blow-up: both probe columns grow by at least 10x end-to-end
/// over N in {4, 8, 16, 24} while the value process of the compensator
/// scenario stays flat.
#[test]
fn criterion_7_divergence_probes() {
    let opts = SolveOptions::default();
    let schedule = [4usize, 8, 16, 24];

    let c5 = divergence_probe(
        DivergenceKind::Counterexample5,
        &schedule,
        1.0,
        200_000,
        2025,
        &opts,
    )
    .unwrap();
    let c5_span = c5.rows.last().unwrap().log10_estimate - c5.rows[0].log10_estimate;

    let c7 = divergence_probe(
        DivergenceKind::Counterexample7,
        &schedule,
        0.5,
        200_000,
        2025,
        &opts,
    )
    .unwrap();
    let c7_span = c7.rows.last().unwrap().log10_estimate - c7.rows[0].log10_estimate;

    let s2 = &c7.y_s2_estimates;
    let s2_max = s2.iter().cloned().fold(f64::MIN, f64::max);
    let s2_min = s2.iter().cloned().fold(f64::MAX, f64::min);
    let s2_flat = s2_min > 0.0 && s2_max / s2_min <= 2.0;

    let ok = c5.strictly_increasing()
        && c7.strictly_increasing()
        && c5_span >= 1.0
        && c7_span >= 1.0
        && s2_flat;
    assert!(
        verdict(
            "7 divergence-probes",
            ok,
            &format!(
                "c5 log10 span {c5_span:.2} >= 1, c7 log10 span {c7_span:.2} >= 1, S2 ratio {:.3} <= 2",
                s2_max / s2_min
            )
        ),
        "c5 {:?}, c7 {:?}, s2 {s2:?}",
        c5.rows,
        c7.rows
    );
}

/// Uniform a priori boundedness across the penalization sweep: the bound
/// ratio never exceeds three times its value at the smallest penalty.
#[test]
fn criterion_8_uniform_apriori_bound() {
    let opts = SolveOptions::default();
    let inst = american_put(0.05, 100);
    let lattice = *inst.lattice();
    let strike = 100.0;
    let sigma = 0.2f64;
    let rate = 0.05f64;
    let payoff = move |t: f64, b: f64| {
        (strike - strike * (sigma * b + (rate - 0.5 * sigma * sigma) * t).exp()).max(0.0)
    };
    let envelope = snell_envelope(&lattice, payoff, move |b| payoff(1.0, b)).unwrap();
    let plan = PathPlan::sampled(20_000, 7);

    let mut ratios = Vec::new();
    for &penalty in &SWEEP_SCHEDULE {
        let sol = solve_penalized(&inst, penalty, &opts).unwrap();
        let report = check_apriori(&sol, &inst, &envelope, 2.0, &plan).unwrap();
        ratios.push(report.ratio.expect("nonzero right-hand side"));
    }
    let max_ratio = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let ok = max_ratio <= 3.0 * ratios[0];
    assert!(
        verdict(
            "8 uniform-apriori-bound",
            ok,
            &format!("ratios {ratios:?}, max {max_ratio:.4} <= 3 x {:.4}", ratios[0])
        ),
        "ratios {ratios:?}"
    );
}

/// Determinism: the same seeded computation renders byte-identical reports
/// when repeated (thread scheduling must not leak into any output).
#[test]
fn criterion_9_determinism() {
    let opts = SolveOptions::default();
    let inst = american_put(0.05, 60);
    let plan = PathPlan::sampled(30_000, 99);

    let render = || {
        let sweep = penalization_sweep(&inst, &SWEEP_SCHEDULE, &opts).unwrap();
        let metrics = convergence_metrics(&sweep, 2.0, &plan).unwrap();
        let report = norms(&sweep.reference, 2.0, &plan).unwrap();
        let mut bytes = String::new();
        bytes.push_str(&solution_csv(&sweep.reference));
        bytes.push_str(&to_json(&metrics));
        bytes.push_str(&to_json(&report));
        bytes
    };
    let first = render();
    let second = render();
    let ok = first == second;
    assert!(
        verdict(
            "9 determinism",
            ok,
            &format!("{} report bytes reproduced exactly", first.len())
        ),
        "reports differ"
    );
}
