//! Backward-induction solvers: plain, penalized and reflected equations,
//! plus the Snell envelope.
//!
//! All four walk the lattice from the terminal layer to the root. At step
//! `i` the conditional-expectation target `c` and the martingale increment
//! `z` are read off the already-computed layer `i + 1`; the `y`-value is then
//! the root of the implicit cell, solved per node. Layers are strictly
//! sequential, nodes within a layer are independent.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::{implicit_step, Driver, SolveOptions, StepProblem};
use crate::error::{Error, Result};
use crate::exec;
use crate::lattice::{cond_expect, z_from_martingale, Lattice, NodeField};

pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type BarrierFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A full problem: lattice, driver, terminal condition and optional barrier.
#[derive(Clone)]
pub struct Instance {
    lattice: Lattice,
    driver: Driver,
    terminal: TerminalFn,
    barrier: Option<BarrierFn>,
    label: String,
}

impl std::fmt::Debug for Instance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Instance")
            .field("label", &self.label)
            .field("lattice", &self.lattice.spec())
            .field("driver", &self.driver)
            .field("barrier", &self.barrier.is_some())
            .finish()
    }
}

impl Instance {
    /// Builds and validates an instance. Rejects terminal values that are not
    /// finite, barriers lying above the terminal condition at maturity, and
    /// step sizes too coarse for the declared monotonicity constant
    /// (`h * max(mu, 0)` must stay below 1 for the implicit cell to have a
    /// unique root).
    pub fn new(
        label: impl Into<String>,
        lattice: Lattice,
        driver: Driver,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
        barrier: Option<BarrierFn>,
    ) -> Result<Self> {
        let h = lattice.step_size();
        if h * driver.mu().max(0.0) >= 1.0 {
            return Err(Error::Precondition(format!(
                "h * max(mu, 0) = {} >= 1; refine the lattice or fix mu",
                h * driver.mu().max(0.0)
            )));
        }
        let n = lattice.steps();
        let horizon = lattice.horizon();
        for j in 0..=n {
            let b = lattice.value(n, j);
            let xi = terminal(b);
            if !xi.is_finite() {
                return Err(Error::Precondition(format!(
                    "terminal condition is {xi} at b={b}"
                )));
            }
            if let Some(l) = &barrier {
                let lt = l(horizon, b);
                if lt > xi {
                    return Err(Error::Precondition(format!(
                        "barrier {lt} exceeds terminal value {xi} at maturity node b={b}"
                    )));
                }
            }
        }
        Ok(Self {
            lattice,
            driver,
            terminal: Arc::new(terminal),
            barrier,
            label: label.into(),
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn driver(&self) -> &Driver {
        &self.driver
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn terminal_at(&self, b: f64) -> f64 {
        (self.terminal)(b)
    }

    pub fn has_barrier(&self) -> bool {
        self.barrier.is_some()
    }

    pub fn barrier_at(&self, t: f64, b: f64) -> Option<f64> {
        self.barrier.as_ref().map(|l| l(t, b))
    }

    /// Barrier sampled on every lattice node, if present.
    pub fn barrier_field(&self) -> Result<Option<NodeField>> {
        match &self.barrier {
            None => Ok(None),
            Some(l) => Ok(Some(NodeField::sample(&self.lattice, |t, b| l(t, b))?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "penalty", rename_all = "snake_case")]
pub enum Method {
    Plain,
    Penalized(f64),
    Reflected,
    Snell,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Plain => write!(f, "plain"),
            Method::Penalized(n) => write!(f, "penalized({n})"),
            Method::Reflected => write!(f, "reflected"),
            Method::Snell => write!(f, "snell"),
        }
    }
}

/// Node-indexed output of a solve: the value field, its martingale part,
/// the compensator increments and the cumulative compensator.
#[derive(Debug, Clone)]
pub struct Solution {
    pub lattice: Lattice,
    pub y: NodeField,
    /// Martingale coefficients, defined on steps `0..N-1`.
    pub z: NodeField,
    /// Per-node compensator increments, steps `0..N-1`. Each increment is
    /// nonnegative (up to the root tolerance), which is exactly "K is
    /// nondecreasing along every path".
    pub k_increments: NodeField,
    /// Cumulative compensator on the lattice: node `(i, j)` holds the mean of
    /// the path-accumulated increments over all paths arriving there, so the
    /// terminal layer averages to `E K_T` exactly.
    pub k: NodeField,
    /// Barrier sampled at the nodes, when the instance had one.
    pub barrier: Option<NodeField>,
    pub method: Method,
    pub root_tol: f64,
}

impl Solution {
    pub fn price(&self) -> f64 {
        self.y.at(0, 0)
    }

    /// Mean of the terminal cumulative-compensator layer, i.e. `E K_T`.
    pub fn expected_terminal_k(&self) -> f64 {
        let n = self.lattice.steps();
        let weights = layer_weights(n);
        self.k
            .layer(n)
            .iter()
            .zip(&weights)
            .map(|(v, w)| v * w)
            .sum()
    }
}

/// Node weights `P(arrive at (i, j)) = C(i, j) / 2^i` for one layer.
pub fn layer_weights(i: usize) -> Vec<f64> {
    let mut w = vec![0.0; i + 1];
    let mut c = 1.0;
    for (j, slot) in w.iter_mut().enumerate() {
        *slot = c;
        c *= (i - j) as f64 / (j + 1) as f64;
    }
    let scale = 2f64.powi(-(i as i32));
    for slot in &mut w {
        *slot *= scale;
    }
    w
}

enum CellMode {
    Plain,
    Penalized(f64),
    Reflected,
}

fn backward_induction(
    inst: &Instance,
    mode: CellMode,
    opts: &SolveOptions,
) -> Result<Solution> {
    let lattice = *inst.lattice();
    let n = lattice.steps();
    let h = lattice.step_size();
    let driver = inst.driver();

    let use_barrier = !matches!(mode, CellMode::Plain);
    if use_barrier && !inst.has_barrier() {
        return Err(Error::Config(format!(
            "instance '{}' has no barrier but the solver needs one",
            inst.label()
        )));
    }

    let mut y_layers: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut z_layers: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut dk_layers: Vec<Vec<f64>> = Vec::with_capacity(n);

    let terminal: Vec<f64> = (0..=n).map(|j| inst.terminal_at(lattice.value(n, j))).collect();
    y_layers.push(terminal);

    for i in (0..n).rev() {
        let next = y_layers.last().expect("layer stack never empty");
        let targets = cond_expect(&lattice, next, i)?;
        let zs = z_from_martingale(&lattice, next, i)?;
        let t = lattice.time(i);

        let cells: Vec<(f64, f64)> = exec::try_map_indexed(i + 1, |j| {
            let b = lattice.value(i, j);
            let barrier = if use_barrier { inst.barrier_at(t, b) } else { None };
            let problem = StepProblem {
                t,
                b,
                target: targets[j],
                z: zs[j],
                h,
                penalty: match mode {
                    CellMode::Penalized(level) => level,
                    _ => 0.0,
                },
                barrier: match mode {
                    CellMode::Penalized(_) => barrier,
                    _ => None,
                },
            };
            match mode {
                CellMode::Plain => Ok((implicit_step(driver, &problem, opts)?, 0.0)),
                CellMode::Penalized(level) => {
                    let y = implicit_step(driver, &problem, opts)?;
                    let l = barrier.expect("penalized mode requires a barrier");
                    Ok((y, h * level * (l - y).max(0.0)))
                }
                CellMode::Reflected => {
                    let unreflected = implicit_step(driver, &problem, opts)?;
                    let l = barrier.expect("reflected mode requires a barrier");
                    if unreflected >= l {
                        Ok((unreflected, 0.0))
                    } else {
                        // Reflection binds: the cell becomes
                        // y = c + h f(t, y, z) + dk with y = l, so the
                        // increment is the residual of the free cell at l.
                        // This keeps |Y - c - h f(t,Y,Z) - dK| at zero and is
                        // the exact limit of the penalized increments.
                        let f = driver.eval(t, b, l, zs[j]);
                        if !f.is_finite() {
                            return Err(Error::DriverEval { t, b, y: l, z: zs[j] });
                        }
                        Ok((l, l - targets[j] - h * f))
                    }
                }
            }
        })?;

        y_layers.push(cells.iter().map(|c| c.0).collect());
        z_layers.push(zs);
        dk_layers.push(cells.iter().map(|c| c.1).collect());
    }

    y_layers.reverse();
    z_layers.reverse();
    dk_layers.reverse();

    let y = NodeField::from_layers(y_layers)?;
    let z = if n > 0 {
        NodeField::from_layers(z_layers)?
    } else {
        NodeField::zeros(0)
    };
    let k_increments = if n > 0 {
        NodeField::from_layers(dk_layers)?
    } else {
        NodeField::zeros(0)
    };
    let k = accumulate_k(&k_increments, n)?;

    Ok(Solution {
        lattice,
        y,
        z,
        k_increments,
        barrier: inst.barrier_field()?,
        k,
        method: match mode {
            CellMode::Plain => Method::Plain,
            CellMode::Penalized(level) => Method::Penalized(level),
            CellMode::Reflected => Method::Reflected,
        },
        root_tol: opts.root_tol,
    })
}

/// Forward pass turning per-node increments into the cumulative field:
/// each node averages `K + dK` over its incoming edges, weighted by the
/// number of paths arriving through each parent.
fn accumulate_k(increments: &NodeField, steps: usize) -> Result<NodeField> {
    let mut layers: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    layers.push(vec![0.0]);
    for i in 0..steps {
        let prev = &layers[i];
        let weights = layer_weights(i);
        let mut next = vec![0.0; i + 2];
        for (j, slot) in next.iter_mut().enumerate() {
            let mut mass = 0.0;
            let mut acc = 0.0;
            if j > 0 {
                // up-move from (i, j-1)
                let w = 0.5 * weights[j - 1];
                acc += w * (prev[j - 1] + increments.at(i, j - 1));
                mass += w;
            }
            if j <= i {
                // down-move from (i, j)
                let w = 0.5 * weights[j];
                acc += w * (prev[j] + increments.at(i, j));
                mass += w;
            }
            *slot = acc / mass;
        }
        layers.push(next);
    }
    NodeField::from_layers(layers)
}

/// Unconstrained equation: the barrier is ignored and `K` is identically 0.
pub fn solve_plain(inst: &Instance, opts: &SolveOptions) -> Result<Solution> {
    backward_induction(inst, CellMode::Plain, opts)
}

/// Penalized equation at level `n`: the constraint is replaced by the drift
/// term `n * (Y - L)^-`, folded into the same implicit cell.
pub fn solve_penalized(inst: &Instance, penalty: f64, opts: &SolveOptions) -> Result<Solution> {
    if penalty.is_nan() || penalty < 0.0 {
        return Err(Error::Parameter(format!(
            "penalty level must be nonnegative, got {penalty}"
        )));
    }
    backward_induction(inst, CellMode::Penalized(penalty), opts)
}

/// Constrained equation solved by projection: the one-step obstacle problem
/// at every node, with the compensator increment active only where the value
/// sits exactly on the barrier.
pub fn solve_reflected(inst: &Instance, opts: &SolveOptions) -> Result<Solution> {
    backward_induction(inst, CellMode::Reflected, opts)
}

/// Discrete Snell envelope: the smallest supermartingale dominating the
/// barrier with the given terminal layer.
pub fn snell_envelope(
    lattice: &Lattice,
    barrier: impl Fn(f64, f64) -> f64,
    terminal: impl Fn(f64) -> f64,
) -> Result<NodeField> {
    let n = lattice.steps();
    let mut layers: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    layers.push((0..=n).map(|j| terminal(lattice.value(n, j))).collect());
    for i in (0..n).rev() {
        let next = layers.last().expect("non-empty");
        let cont = cond_expect(lattice, next, i)?;
        let t = lattice.time(i);
        layers.push(
            (0..=i)
                .map(|j| barrier(t, lattice.value(i, j)).max(cont[j]))
                .collect(),
        );
    }
    layers.reverse();
    NodeField::from_layers(layers)
}

/// Snell envelope packaged as a full solution via its supermartingale
/// decomposition: `dK = R - E[R' | node]`, positive exactly where the
/// envelope sits on the barrier.
pub fn snell_solution(
    lattice: &Lattice,
    barrier: impl Fn(f64, f64) -> f64 + Copy,
    terminal: impl Fn(f64) -> f64,
) -> Result<Solution> {
    let r = snell_envelope(lattice, barrier, terminal)?;
    let n = lattice.steps();
    let mut z_layers = Vec::with_capacity(n.max(1));
    let mut dk_layers = Vec::with_capacity(n.max(1));
    for i in 0..n {
        let next = r.layer(i + 1);
        let cont = cond_expect(lattice, next, i)?;
        z_layers.push(z_from_martingale(lattice, next, i)?);
        dk_layers.push((0..=i).map(|j| r.at(i, j) - cont[j]).collect());
    }
    let (z, k_increments) = if n > 0 {
        (
            NodeField::from_layers(z_layers)?,
            NodeField::from_layers(dk_layers)?,
        )
    } else {
        (NodeField::zeros(0), NodeField::zeros(0))
    };
    let k = accumulate_k(&k_increments, n)?;
    Ok(Solution {
        lattice: *lattice,
        y: r,
        z,
        k_increments,
        k,
        barrier: Some(NodeField::sample(lattice, barrier)?),
        method: Method::Snell,
        root_tol: 0.0,
    })
}

/// Worst one-step defect `|Y - c - h f(t, Y, Z) - dK|` over interior nodes,
/// with `c` and `Z` recomputed from the stored next layer.
pub fn self_consistency_residual(inst: &Instance, sol: &Solution) -> Result<f64> {
    let lattice = inst.lattice();
    let n = lattice.steps();
    let h = lattice.step_size();
    let mut worst = 0.0f64;
    for i in 0..n {
        let next = sol.y.layer(i + 1);
        let targets = cond_expect(lattice, next, i)?;
        let zs = z_from_martingale(lattice, next, i)?;
        let t = lattice.time(i);
        for j in 0..=i {
            let y = sol.y.at(i, j);
            let f = inst.driver().eval(t, lattice.value(i, j), y, zs[j]);
            let defect = y - targets[j] - h * f - sol.k_increments.at(i, j);
            worst = worst.max(defect.abs());
        }
    }
    Ok(worst)
}

/// Solves every penalty level of a strictly increasing schedule, in parallel
/// across levels. The reflected reference is computed independently.
pub fn penalization_sweep(
    inst: &Instance,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<Sweep> {
    if schedule.is_empty() {
        return Err(Error::Parameter("penalty schedule is empty".into()));
    }
    if schedule[0] < 0.0 {
        return Err(Error::Parameter("penalty levels must be nonnegative".into()));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "penalty schedule must be strictly increasing".into(),
        ));
    }
    let levels = exec::try_map_indexed(schedule.len(), |idx| {
        solve_penalized(inst, schedule[idx], opts)
    })?;
    let reference = solve_reflected(inst, opts)?;
    Ok(Sweep {
        penalties: schedule.to_vec(),
        levels,
        reference,
    })
}

/// Output of a penalization sweep: one solution per level plus the reflected
/// reference they are converging to.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub penalties: Vec<f64>,
    pub levels: Vec<Solution>,
    pub reference: Solution,
}
