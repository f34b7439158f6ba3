//! Norm estimation and verification checks over solved instances.
//!
//! Everything here is a pure function of immutable solutions: norms of
//! running suprema, comparison and minimality checks, a priori bound ratios
//! and penalization convergence tables. Path-dependent quantities run through
//! [`crate::paths`]; node-local quantities are exact lattice sums.

use serde::{Deserialize, Serialize};

use crate::bsde::{layer_weights, Instance, Solution, Sweep};
use crate::error::{Error, Result};
use crate::lattice::{cond_expect, NodeField};
use crate::paths::{path_expectation, Estimate, PathMode, PathPlan};

/// Norm estimates of one solution.
///
/// `sp` is the running-supremum norm `(E sup_t |Y_t|^p)^(1 and 1/p)`, `mp_z`
/// the quadratic norm of the martingale part, `k_moment` the terminal
/// compensator moment, and `class_d` the stopping-time norm
/// `sup_tau E|Y_tau|`, computed exactly as the root value of the envelope of
/// `|Y|`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormReport {
    pub p: f64,
    pub sp: f64,
    pub mp_z: f64,
    pub k_moment: f64,
    pub class_d: f64,
    pub mode: PathMode,
    pub sp_std_error: Option<f64>,
    pub mp_z_std_error: Option<f64>,
    pub k_moment_std_error: Option<f64>,
}

fn outer_exponent(p: f64) -> f64 {
    if p >= 1.0 {
        1.0 / p
    } else {
        1.0
    }
}

/// Delta-method standard error for `mean^(outer)` from the SE of the mean.
fn normalized(est: Estimate, outer: f64) -> (f64, Option<f64>) {
    let value = est.mean.powf(outer);
    let se = est.std_error.map(|se| {
        if est.mean > 0.0 {
            se * outer * est.mean.powf(outer - 1.0)
        } else {
            se
        }
    });
    (value, se)
}

pub fn norms(sol: &Solution, p: f64, plan: &PathPlan) -> Result<NormReport> {
    if p.is_nan() || p <= 0.0 {
        return Err(Error::Parameter(format!("norm order must be positive, got {p}")));
    }
    let steps = sol.lattice.steps();
    let h = sol.lattice.step_size();
    let outer = outer_exponent(p);

    let y = &sol.y;
    let sup_est = path_expectation(steps, plan, &|path| {
        let mut sup = 0.0f64;
        for (i, &j) in path.iter().enumerate() {
            sup = sup.max(y.at(i, j).abs());
        }
        sup.powf(p)
    })?;

    let z = &sol.z;
    let z_est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            let v = z.at(i, j);
            acc += v * v * h;
        }
        acc.powf(0.5 * p)
    })?;

    let dk = &sol.k_increments;
    let k_est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            acc += dk.at(i, j);
        }
        acc.powf(p)
    })?;

    let (sp, sp_se) = normalized(sup_est, outer);
    let (mp_z, mp_z_se) = normalized(z_est, outer);
    let (k_moment, k_se) = normalized(k_est, outer);

    Ok(NormReport {
        p,
        sp,
        mp_z,
        k_moment,
        class_d: class_d_norm(sol)?,
        mode: plan.mode,
        sp_std_error: sp_se,
        mp_z_std_error: mp_z_se,
        k_moment_std_error: k_se,
    })
}

/// `sup_tau E|Y_tau|` via the envelope recursion on `|Y|`: exact on the
/// lattice, any size.
pub fn class_d_norm(sol: &Solution) -> Result<f64> {
    let steps = sol.lattice.steps();
    let mut layer: Vec<f64> = sol.y.layer(steps).iter().map(|v| v.abs()).collect();
    for i in (0..steps).rev() {
        let cont = cond_expect(&sol.lattice, &layer, i)?;
        layer = (0..=i)
            .map(|j| sol.y.at(i, j).abs().max(cont[j]))
            .collect();
    }
    Ok(layer[0])
}

/// Brute-force `sup_tau E|Y_tau|` over every adapted stopping rule on the
/// non-recombining binary tree. The rule count is `2^(2^N - 1)`, so this is
/// only feasible for `N <= 4`; it exists as an independent cross-check of
/// [`class_d_norm`].
pub fn class_d_by_stopping_enumeration(sol: &Solution) -> Result<f64> {
    let steps = sol.lattice.steps();
    if steps > 4 {
        return Err(Error::Mode(format!(
            "stopping-rule enumeration supports at most 4 steps, got {steps}"
        )));
    }
    // History node at depth i (i in 0..steps) identified by the first i move
    // bits; rule bit index = (2^i - 1) + history.
    let decision_bits: u32 = (1u32 << steps) - 1;
    let rules: u64 = 1u64 << decision_bits;
    let paths: u32 = 1 << steps;
    let mut best = f64::NEG_INFINITY;
    for rule in 0..rules {
        let mut acc = 0.0;
        for code in 0..paths {
            let mut j = 0usize;
            let mut stopped = f64::NAN;
            for i in 0..steps {
                let history = (code & ((1 << i) - 1)) as u64;
                let bit_index = (1u64 << i) - 1 + history;
                if rule >> bit_index & 1 == 1 {
                    stopped = sol.y.at(i, j).abs();
                    break;
                }
                j += (code >> i & 1) as usize;
            }
            if stopped.is_nan() {
                stopped = sol.y.at(steps, j).abs();
            }
            acc += stopped;
        }
        best = best.max(acc / paths as f64);
    }
    Ok(best)
}

/// Node-wise ordering failure report for a claimed `Y_a <= Y_b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tol: f64,
    pub violation_count: usize,
    pub worst_violation: f64,
    pub violations: Vec<(usize, usize, f64)>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

pub fn check_comparison(a: &Solution, b: &Solution, tol: f64) -> Result<ComparisonReport> {
    if a.lattice.spec() != b.lattice.spec() {
        return Err(Error::Shape(
            "cannot compare solutions on different lattices".into(),
        ));
    }
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    for (i, j, va) in a.y.iter_nodes() {
        let vb = b.y.at(i, j);
        let excess = va - vb;
        if excess > tol {
            violations.push((i, j, excess));
        }
        worst = worst.max(excess);
    }
    Ok(ComparisonReport {
        tol,
        violation_count: violations.len(),
        worst_violation: worst.max(0.0),
        violations,
    })
}

/// Minimality diagnostics: the compensator-off-the-barrier mass
/// `sum |Y - L| dK` (the increments are nonnegative, so each term is the
/// magnitude of `(Y - L) dK`), the largest single node term, and the deepest
/// barrier violation `(L - Y)^+`. Penalized solutions act strictly below the
/// barrier, so a signed sum would hide their defect; the magnitude is what
/// must vanish.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkorokhodReport {
    pub sum: f64,
    pub max_node_product: f64,
    pub barrier_violation: f64,
}

impl SkorokhodReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.sum <= tol && self.barrier_violation <= tol
    }
}

pub fn check_skorokhod(sol: &Solution) -> Result<SkorokhodReport> {
    let barrier = sol.barrier.as_ref().ok_or_else(|| {
        Error::Config("solution carries no barrier; nothing to check".into())
    })?;
    let mut sum = 0.0;
    let mut max_product = 0.0f64;
    let mut violation = 0.0f64;
    for (i, j, dk) in sol.k_increments.iter_nodes() {
        let gap = sol.y.at(i, j) - barrier.at(i, j);
        let product = (gap * dk).abs();
        sum += product;
        max_product = max_product.max(product);
    }
    for (i, j, l) in barrier.iter_nodes() {
        violation = violation.max(l - sol.y.at(i, j));
    }
    Ok(SkorokhodReport {
        sum,
        max_node_product: max_product,
        barrier_violation: violation.max(0.0),
    })
}

/// Two-sided bound data for one solution against a dominating process `X`:
/// `lhs = E (int |Z|^2)^{p/2} + E K_T^p`,
/// `rhs = E sup|Y|^p + E (int |f(s,0,0)| ds)^p + E (int f^-(s,X_s,0) ds)^p`.
/// The multiplicative constant relating them is never pinned down
/// numerically, so the report records the raw ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AprioriReport {
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
}

pub fn check_apriori(
    sol: &Solution,
    inst: &Instance,
    majorant: &NodeField,
    p: f64,
    plan: &PathPlan,
) -> Result<AprioriReport> {
    if p < 1.0 {
        return Err(Error::Parameter(format!("order must satisfy p >= 1, got {p}")));
    }
    let steps = sol.lattice.steps();
    if majorant.steps() != steps {
        return Err(Error::Shape("majorant shape does not match lattice".into()));
    }
    let slack = sol.root_tol.max(1e-9);
    for (i, j, x) in majorant.iter_nodes() {
        if x < sol.y.at(i, j) - slack {
            return Err(Error::Precondition(format!(
                "majorant fails to dominate Y at node ({i}, {j}): {x} < {}",
                sol.y.at(i, j)
            )));
        }
    }

    let h = sol.lattice.step_size();
    let lattice = sol.lattice;
    let driver = inst.driver();

    let z = &sol.z;
    let z_est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            let v = z.at(i, j);
            acc += v * v * h;
        }
        acc.powf(0.5 * p)
    })?;
    let dk = &sol.k_increments;
    let k_est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            acc += dk.at(i, j);
        }
        acc.powf(p)
    })?;
    let y = &sol.y;
    let sup_est = path_expectation(steps, plan, &|path| {
        let mut sup = 0.0f64;
        for (i, &j) in path.iter().enumerate() {
            sup = sup.max(y.at(i, j).abs());
        }
        sup.powf(p)
    })?;
    let f0_est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            let t = lattice.time(i);
            acc += driver.eval(t, lattice.value(i, j), 0.0, 0.0).abs() * h;
        }
        acc.powf(p)
    })?;
    let fminus_est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            let t = lattice.time(i);
            let f = driver.eval(t, lattice.value(i, j), majorant.at(i, j), 0.0);
            acc += (-f).max(0.0) * h;
        }
        acc.powf(p)
    })?;

    let lhs = z_est.mean + k_est.mean;
    let rhs = sup_est.mean + f0_est.mean + fminus_est.mean;
    Ok(AprioriReport {
        p,
        lhs,
        rhs,
        ratio: (rhs > 0.0).then(|| lhs / rhs),
    })
}

/// Integrability probe for a barrier majorant `X`:
/// `E (sum_i f^-(t_i, X_i, 0) h)^p` plus whether `X` dominates the barrier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MajorantReport {
    pub p: f64,
    pub moment_estimate: f64,
    pub dominates: bool,
}

pub fn check_h7(
    inst: &Instance,
    majorant: &NodeField,
    p: f64,
    plan: &PathPlan,
) -> Result<MajorantReport> {
    let lattice = *inst.lattice();
    let steps = lattice.steps();
    if majorant.steps() != steps {
        return Err(Error::Shape("majorant shape does not match lattice".into()));
    }
    let mut dominates = true;
    'outer: for i in 0..=steps {
        let t = lattice.time(i);
        for j in 0..=i {
            if let Some(l) = inst.barrier_at(t, lattice.value(i, j)) {
                if majorant.at(i, j) < l {
                    dominates = false;
                    break 'outer;
                }
            }
        }
    }
    let h = lattice.step_size();
    let driver = inst.driver();
    let est = path_expectation(steps, plan, &|path| {
        let mut acc = 0.0;
        for (i, &j) in path.iter().enumerate().take(steps) {
            let t = lattice.time(i);
            let f = driver.eval(t, lattice.value(i, j), majorant.at(i, j), 0.0);
            acc += (-f).max(0.0) * h;
        }
        acc.powf(p)
    })?;
    Ok(MajorantReport {
        p,
        moment_estimate: est.mean,
        dominates,
    })
}

/// Per-level gaps between a penalized solution and the reflected reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub penalty: f64,
    /// Largest node-wise `|Y^n - Y|`.
    pub max_node_y_gap: f64,
    /// `E sup_t |Y^n_t - Y_t|^p`.
    pub sup_y_gap: f64,
    /// `E (int |Z^n - Z|^2 dt)^{p/2}`.
    pub z_gap: f64,
    /// `E sup_t |K^n_t - K_t|^p` with both compensators accumulated path-wise.
    pub k_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub p: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Node count where some coarser level exceeds a finer one beyond tol.
    pub y_monotonicity_violations: usize,
    /// Penalty levels whose max-node gap failed to decrease from the
    /// previous level.
    pub non_decreasing_gap_levels: Vec<f64>,
}

pub fn convergence_metrics(sweep: &Sweep, p: f64, plan: &PathPlan) -> Result<ConvergenceReport> {
    let reference = &sweep.reference;
    let steps = reference.lattice.steps();
    let h = reference.lattice.step_size();
    let tol = reference.root_tol.max(1e-12);

    let mut rows = Vec::with_capacity(sweep.levels.len());
    for (penalty, sol) in sweep.penalties.iter().zip(&sweep.levels) {
        if sol.lattice.spec() != reference.lattice.spec() {
            return Err(Error::Shape("sweep levels must share the lattice".into()));
        }
        let max_node_y_gap = sol.y.max_abs_diff(&reference.y)?;
        let ya = &sol.y;
        let yb = &reference.y;
        let sup_y = path_expectation(steps, plan, &|path| {
            let mut sup = 0.0f64;
            for (i, &j) in path.iter().enumerate() {
                sup = sup.max((ya.at(i, j) - yb.at(i, j)).abs());
            }
            sup.powf(p)
        })?;
        let za = &sol.z;
        let zb = &reference.z;
        let z_gap = path_expectation(steps, plan, &|path| {
            let mut acc = 0.0;
            for (i, &j) in path.iter().enumerate().take(steps) {
                let d = za.at(i, j) - zb.at(i, j);
                acc += d * d * h;
            }
            acc.powf(0.5 * p)
        })?;
        let ka = &sol.k_increments;
        let kb = &reference.k_increments;
        let k_gap = path_expectation(steps, plan, &|path| {
            let mut cum_a = 0.0;
            let mut cum_b = 0.0;
            let mut sup = 0.0f64;
            for (i, &j) in path.iter().enumerate().take(steps) {
                cum_a += ka.at(i, j);
                cum_b += kb.at(i, j);
                sup = sup.max((cum_a - cum_b).abs());
            }
            sup.powf(p)
        })?;
        rows.push(ConvergenceRow {
            penalty: *penalty,
            max_node_y_gap,
            sup_y_gap: sup_y.mean,
            z_gap: z_gap.mean,
            k_gap: k_gap.mean,
        });
    }

    let mut monotonicity_violations = 0;
    for pair in sweep.levels.windows(2) {
        for (i, j, coarse) in pair[0].y.iter_nodes() {
            if coarse > pair[1].y.at(i, j) + tol {
                monotonicity_violations += 1;
            }
        }
    }

    let mut non_decreasing = Vec::new();
    for w in rows.windows(2) {
        if w[1].max_node_y_gap >= w[0].max_node_y_gap {
            non_decreasing.push(w[1].penalty);
        }
    }

    Ok(ConvergenceReport {
        p,
        rows,
        y_monotonicity_violations: monotonicity_violations,
        non_decreasing_gap_levels: non_decreasing,
    })
}

/// Exact lattice mean of a node function: `sum_j P(node) f(node)` at one step.
pub fn layer_mean(field: &NodeField, step: usize) -> f64 {
    let weights = layer_weights(step);
    field
        .layer(step)
        .iter()
        .zip(&weights)
        .map(|(v, w)| v * w)
        .sum()
}
