//! Canonical problem instances: pricing oracles and blow-up probes.
//!
//! The American put doubles as the main validation oracle (an independent
//! binomial pricer lives here, sharing no code with the solvers). The two
//! blow-up scenarios carry drivers of the form `-(...)^+ * exp(b^4)` whose
//! divergence under lattice refinement is the point; their probe columns are
//! accumulated in log space because the magnitudes leave the f64 range long
//! before the growth pattern becomes visible.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::norms;
use crate::bsde::{solve_reflected, Instance};
use crate::driver::{Driver, SolveOptions};
use crate::error::{Error, Result};
use crate::lattice::{build_lattice, LatticeSpec};
use crate::paths::{log_sum_exp, path_log_expectation, PathPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    /// Put on a geometric Brownian stock mapped node-wise onto the lattice,
    /// priced as a reflected equation with discounting driver `-r*y`.
    AmericanPut {
        rate: f64,
        sigma: f64,
        strike: f64,
        spot: f64,
        horizon: f64,
        steps: usize,
    },
    /// `f = a*y + b*z + c` with terminal `B_T^2` and a constant floor.
    LinearBsde {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default)]
        floor: f64,
        horizon: f64,
        steps: usize,
    },
    /// Barrier `T - t`, terminal 0, driver `-(y-(T-t))^+ exp(b^4)`.
    Counterexample5 { horizon: f64, steps: usize },
    /// Barrier 1, terminal 1, driver `-y^+ exp(b^4)`.
    Counterexample7 { horizon: f64, steps: usize },
}

impl ScenarioSpec {
    pub fn american_put_default() -> Self {
        ScenarioSpec::AmericanPut {
            rate: 0.05,
            sigma: 0.2,
            strike: 100.0,
            spot: 100.0,
            horizon: 1.0,
            steps: 100,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScenarioSpec::AmericanPut { .. } => "american_put",
            ScenarioSpec::LinearBsde { .. } => "linear_bsde",
            ScenarioSpec::Counterexample5 { .. } => "counterexample5",
            ScenarioSpec::Counterexample7 { .. } => "counterexample7",
        }
    }

    pub fn steps(&self) -> usize {
        match *self {
            ScenarioSpec::AmericanPut { steps, .. }
            | ScenarioSpec::LinearBsde { steps, .. }
            | ScenarioSpec::Counterexample5 { steps, .. }
            | ScenarioSpec::Counterexample7 { steps, .. } => steps,
        }
    }

    pub fn with_steps(mut self, n: usize) -> Self {
        match &mut self {
            ScenarioSpec::AmericanPut { steps, .. }
            | ScenarioSpec::LinearBsde { steps, .. }
            | ScenarioSpec::Counterexample5 { steps, .. }
            | ScenarioSpec::Counterexample7 { steps, .. } => *steps = n,
        }
        self
    }
}

pub fn make_instance(spec: &ScenarioSpec) -> Result<Instance> {
    match *spec {
        ScenarioSpec::AmericanPut {
            rate,
            sigma,
            strike,
            spot,
            horizon,
            steps,
        } => {
            if sigma <= 0.0 || strike <= 0.0 || spot <= 0.0 {
                return Err(Error::Parameter(
                    "american_put needs sigma > 0, strike > 0, spot > 0".into(),
                ));
            }
            let lattice = build_lattice(LatticeSpec::new(horizon, steps)?)?;
            let stock = move |t: f64, b: f64| spot * (sigma * b + (rate - 0.5 * sigma * sigma) * t).exp();
            let payoff = move |t: f64, b: f64| (strike - stock(t, b)).max(0.0);
            Instance::new(
                format!("american_put(r={rate},sigma={sigma},K={strike},S0={spot},T={horizon},N={steps})"),
                lattice,
                Driver::put_discount(rate)?,
                move |b| payoff(horizon, b),
                Some(Arc::new(payoff)),
            )
        }
        ScenarioSpec::LinearBsde {
            a,
            b,
            c,
            floor,
            horizon,
            steps,
        } => {
            if floor > 0.0 {
                return Err(Error::Parameter(
                    "linear_bsde floor must be <= 0 so the terminal condition dominates it".into(),
                ));
            }
            let lattice = build_lattice(LatticeSpec::new(horizon, steps)?)?;
            Instance::new(
                format!("linear_bsde(a={a},b={b},c={c},floor={floor},T={horizon},N={steps})"),
                lattice,
                Driver::linear(a, b, c)?,
                |x| x * x,
                Some(Arc::new(move |_, _| floor)),
            )
        }
        ScenarioSpec::Counterexample5 { horizon, steps } => {
            let lattice = build_lattice(LatticeSpec::new(horizon, steps)?)?;
            Instance::new(
                format!("counterexample5(T={horizon},N={steps})"),
                lattice,
                Driver::counterexample5(horizon)?,
                |_| 0.0,
                Some(Arc::new(move |t, _| horizon - t)),
            )
        }
        ScenarioSpec::Counterexample7 { horizon, steps } => {
            let lattice = build_lattice(LatticeSpec::new(horizon, steps)?)?;
            Instance::new(
                format!("counterexample7(T={horizon},N={steps})"),
                lattice,
                Driver::counterexample7()?,
                |_| 1.0,
                Some(Arc::new(|_, _| 1.0)),
            )
        }
    }
}

/// Independent American-put binomial oracle.
///
/// Equal-probability tree with the growth rate folded into the node grid:
/// `S_{i+1} = S_i * exp((r - sigma^2/2) h +/- sigma sqrt(h))`, probability
/// 1/2 per branch, discounting by `exp(-r h)`. At `r = 0` this prices the
/// same dynamic program as the reflected solver on the Brownian lattice, so
/// the two must agree to float round-off; for `r > 0` the discounting is
/// discretized differently and agreement is first order in `h`.
pub fn crr_oracle(
    rate: f64,
    sigma: f64,
    strike: f64,
    spot: f64,
    horizon: f64,
    steps: usize,
) -> Result<f64> {
    if sigma <= 0.0 || strike <= 0.0 || spot <= 0.0 || horizon <= 0.0 || steps == 0 {
        return Err(Error::Parameter(
            "oracle needs sigma > 0, strike > 0, spot > 0, horizon > 0, steps >= 1".into(),
        ));
    }
    let h = horizon / steps as f64;
    let up = ((rate - 0.5 * sigma * sigma) * h + sigma * h.sqrt()).exp();
    let down = ((rate - 0.5 * sigma * sigma) * h - sigma * h.sqrt()).exp();
    // Sanity check on the measure: the risk-neutral weight of this grid must
    // be a probability, otherwise the parameters are degenerate.
    let rn = ((rate * h).exp() - down) / (up - down);
    if !(0.0..=1.0).contains(&rn) {
        return Err(Error::Parameter(format!(
            "degenerate tree: implied probability {rn} outside [0, 1]"
        )));
    }
    let discount = (-rate * h).exp();

    let mut prices = vec![0.0; steps + 1];
    for (j, slot) in prices.iter_mut().enumerate() {
        *slot = spot * up.powi(j as i32) * down.powi((steps - j) as i32);
    }
    let mut values: Vec<f64> = prices.iter().map(|s| (strike - s).max(0.0)).collect();
    for i in (0..steps).rev() {
        for j in 0..=i {
            let s = spot * up.powi(j as i32) * down.powi((i - j) as i32);
            let continuation = discount * 0.5 * (values[j + 1] + values[j]);
            values[j] = continuation.max(strike - s);
        }
        values.truncate(i + 1);
    }
    Ok(values[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    Counterexample5,
    Counterexample7,
}

/// One refinement level of a divergence probe. Estimates are reported in
/// log10; `value` carries the linear value only when it is representable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthRow {
    pub steps: usize,
    pub log10_estimate: f64,
    pub value: Option<f64>,
    /// log10 of the ratio to the previous row; the geometric-growth flag.
    pub log10_ratio_to_prev: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthTable {
    pub kind: DivergenceKind,
    pub order: f64,
    pub rows: Vec<GrowthRow>,
    /// Companion column for the reflected value process: `E sup |Y|^2`
    /// estimates per refinement. Stays flat while the compensator column
    /// blows up.
    pub y_s2_estimates: Vec<f64>,
}

impl GrowthTable {
    pub fn strictly_increasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].log10_estimate > w[0].log10_estimate)
    }
}

/// Growth of the blow-up functionals under lattice refinement.
///
/// For the barrier-majorant scenario the probed quantity is
/// `E (sum_i f^-(t_i, X, 0) h)^p` with the deterministic majorant `X = T`;
/// for the compensator scenario it is `E K_T^q` from the reflected solve,
/// with `K_T` accumulated path-wise. Both are computed in log space.
pub fn divergence_probe(
    kind: DivergenceKind,
    schedule: &[usize],
    order: f64,
    sample_count: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<GrowthTable> {
    if schedule.is_empty() {
        return Err(Error::Parameter("refinement schedule is empty".into()));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "refinement schedule must be strictly increasing".into(),
        ));
    }
    if order.is_nan() || order <= 0.0 {
        return Err(Error::Parameter(format!(
            "probe order must be positive, got {order}"
        )));
    }

    let mut rows: Vec<GrowthRow> = Vec::with_capacity(schedule.len());
    let mut y_s2 = Vec::with_capacity(schedule.len());
    for &steps in schedule {
        let (log_e, s2) = match kind {
            DivergenceKind::Counterexample5 => {
                (probe_majorant_moment_c5(steps, order, sample_count, seed)?, 1.0)
            }
            DivergenceKind::Counterexample7 => probe_k_moment_c7(steps, order, sample_count, seed, opts)?,
        };
        let log10 = log_e / std::f64::consts::LN_10;
        let prev = rows.last().map(|r: &GrowthRow| r.log10_estimate);
        rows.push(GrowthRow {
            steps,
            log10_estimate: log10,
            value: (log10 < 300.0).then(|| 10f64.powf(log10)),
            log10_ratio_to_prev: prev.map(|p| log10 - p),
        });
        y_s2.push(s2);
    }
    Ok(GrowthTable {
        kind,
        order,
        rows,
        y_s2_estimates: y_s2,
    })
}

/// `ln E (sum_i t_i exp(B_i^4) h)^p` on the level-`steps` lattice, with the
/// majorant held at the deterministic barrier supremum.
fn probe_majorant_moment_c5(
    steps: usize,
    order: f64,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    let horizon = 1.0;
    let lattice = build_lattice(LatticeSpec::new(horizon, steps)?)?;
    let h = lattice.step_size();
    let log_h = h.ln();
    // f^-(t, X, 0) at the majorant X = T is t * exp(b^4); per-node log value.
    let log_term = |i: usize, j: usize| -> f64 {
        let t = lattice.time(i);
        if t == 0.0 {
            f64::NEG_INFINITY
        } else {
            t.ln() + lattice.value(i, j).powi(4) + log_h
        }
    };
    if order == 1.0 {
        // Linear case: exact node sum E[sum] = sum_i,j w_ij term_ij.
        let mut terms = Vec::new();
        for i in 0..steps {
            let weights = crate::bsde::layer_weights(i);
            for (j, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    terms.push(w.ln() + log_term(i, j));
                }
            }
        }
        Ok(log_sum_exp(terms))
    } else {
        let plan = PathPlan::adaptive(steps, sample_count, seed);
        path_log_expectation(steps, &plan, &|path| {
            let per_path = log_sum_exp((0..steps).map(|i| log_term(i, path[i])));
            order * per_path
        })
    }
}

/// `ln E K_T^q` for the reflected blow-up instance, plus the `E sup |Y|^2`
/// companion estimate.
fn probe_k_moment_c7(
    steps: usize,
    order: f64,
    sample_count: usize,
    seed: u64,
    opts: &SolveOptions,
) -> Result<(f64, f64)> {
    let inst = make_instance(&ScenarioSpec::Counterexample7 {
        horizon: 1.0,
        steps,
    })?;
    let sol = solve_reflected(&inst, opts)?;
    let plan = PathPlan::adaptive(steps, sample_count, seed);
    let dk = &sol.k_increments;
    let log_k_moment = path_log_expectation(steps, &plan, &|path| {
        let log_k = log_sum_exp((0..steps).filter_map(|i| {
            let v = dk.at(i, path[i]);
            (v > 0.0).then(|| v.ln())
        }));
        order * log_k
    })?;
    let report = norms(&sol, 2.0, &plan)?;
    Ok((log_k_moment, report.sp.powi(2)))
}
