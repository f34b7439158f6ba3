//! Generators `f(t, B_t, y, z)` with their structural constants, and the
//! implicit one-step solve shared by all backward inductions.
//!
//! A driver declares a monotonicity constant `mu` (one-sided Lipschitz in
//! `y`) and a Lipschitz constant `lambda` in `z`. The declarations are not
//! trusted blindly: the `probe_*` functions sample the corresponding
//! inequality over a box and report every violation.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

pub type DriverFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Structural hypotheses a driver can declare about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hypothesis {
    H2,
    H3,
    H4,
    H5,
    Z,
    A,
}

/// Parameters of the sublinear-in-z condition:
/// `|f(t,y,z) - f(t,y,0)| <= gamma * (g(t) + |y| + |z|)^alpha`.
#[derive(Clone)]
pub struct CondZ {
    pub alpha: f64,
    pub gamma: f64,
    pub g: TimeFn,
}

/// Parameters of the signed growth bound:
/// `sign(y) * f(t,y,z) <= bound(t) + mu*|y| + lambda*|z|`.
#[derive(Clone)]
pub struct CondA {
    pub mu: f64,
    pub lambda: f64,
    pub bound: TimeFn,
}

#[derive(Clone)]
pub struct Driver {
    name: String,
    eval: DriverFn,
    mu: f64,
    lambda: f64,
    cond_z: Option<CondZ>,
    cond_a: Option<CondA>,
    flags: BTreeSet<Hypothesis>,
}

impl std::fmt::Debug for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Driver")
            .field("name", &self.name)
            .field("mu", &self.mu)
            .field("lambda", &self.lambda)
            .field("flags", &self.flags)
            .finish()
    }
}

impl Driver {
    pub fn new(
        name: impl Into<String>,
        mu: f64,
        lambda: f64,
        eval: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() || !mu.is_finite() {
            return Err(Error::Parameter(format!(
                "driver constants must be finite with lambda >= 0, got mu={mu}, lambda={lambda}"
            )));
        }
        Ok(Self {
            name: name.into(),
            eval: Arc::new(eval),
            mu,
            lambda,
            cond_z: None,
            cond_a: None,
            flags: BTreeSet::new(),
        })
    }

    pub fn with_cond_z(mut self, cond: CondZ) -> Result<Self> {
        if !(cond.alpha > 0.0 && cond.alpha < 1.0) || cond.gamma < 0.0 {
            return Err(Error::Parameter(format!(
                "condition (Z) needs alpha in (0,1) and gamma >= 0, got alpha={}, gamma={}",
                cond.alpha, cond.gamma
            )));
        }
        self.cond_z = Some(cond);
        self.flags.insert(Hypothesis::Z);
        Ok(self)
    }

    pub fn with_cond_a(mut self, cond: CondA) -> Result<Self> {
        if cond.lambda < 0.0 {
            return Err(Error::Parameter(
                "condition (A) needs lambda >= 0".into(),
            ));
        }
        self.cond_a = Some(cond);
        self.flags.insert(Hypothesis::A);
        Ok(self)
    }

    pub fn with_flags(mut self, flags: impl IntoIterator<Item = Hypothesis>) -> Self {
        self.flags.extend(flags);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Declared one-sided Lipschitz constant in `y`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Declared Lipschitz constant in `z`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn flags(&self) -> &BTreeSet<Hypothesis> {
        &self.flags
    }

    pub fn cond_z(&self) -> Option<&CondZ> {
        self.cond_z.as_ref()
    }

    pub fn cond_a(&self) -> Option<&CondA> {
        self.cond_a.as_ref()
    }

    /// Evaluates the generator at `(t, b, y, z)` where `b` is the Brownian
    /// node value the driver may read.
    pub fn eval(&self, t: f64, b: f64, y: f64, z: f64) -> f64 {
        (self.eval)(t, b, y, z)
    }
}

// --- built-in catalogue -----------------------------------------------------

/// `exp(x)` that survives exponents beyond the f64 range of `exp` itself when
/// multiplied by a tiny factor: computes `factor * exp(log_v)` through the
/// summed exponent. Used by the blow-up drivers where `log_v = b^4` can reach
/// several hundred.
fn pospart_times_exp(factor: f64, log_v: f64) -> f64 {
    if factor <= 0.0 {
        return 0.0;
    }
    if log_v <= 700.0 {
        factor * log_v.exp()
    } else {
        (factor.ln() + log_v).exp()
    }
}

impl Driver {
    /// `f(t, y, z) = a*y + b*z + c`.
    pub fn linear(a: f64, b: f64, c: f64) -> Result<Self> {
        let d = Self::new(
            format!("linear({a},{b},{c})"),
            a,
            b.abs(),
            move |_t, _x, y, z| a * y + b * z + c,
        )?
        .with_flags([Hypothesis::H2, Hypothesis::H3, Hypothesis::H4, Hypothesis::H5]);
        d.with_cond_a(CondA {
            mu: a,
            lambda: b.abs(),
            bound: Arc::new(move |_| c.abs()),
        })
    }

    /// `f(t, y, z) = -r*y`, the discounting driver of the American put.
    pub fn put_discount(r: f64) -> Result<Self> {
        let d = Self::new(format!("put_discount({r})"), -r, 0.0, move |_t, _x, y, _z| {
            -r * y
        })?
        .with_flags([Hypothesis::H2, Hypothesis::H3, Hypothesis::H4, Hypothesis::H5]);
        let d = d.with_cond_z(CondZ {
            alpha: 0.5,
            gamma: 0.0,
            g: Arc::new(|_| 0.0),
        })?;
        d.with_cond_a(CondA {
            mu: -r,
            lambda: 0.0,
            bound: Arc::new(|_| 0.0),
        })
    }

    /// `f(t, y) = -(y - (T - t))^+ * exp(b^4)`: integrable barrier data whose
    /// negative part blows up along the majorant.
    pub fn counterexample5(horizon: f64) -> Result<Self> {
        let d = Self::new("counterexample5", 0.0, 0.0, move |t, b, y, _z| {
            -pospart_times_exp(y - (horizon - t), b.powi(4))
        })?
        .with_flags([Hypothesis::H2, Hypothesis::H3, Hypothesis::H4, Hypothesis::H5]);
        let d = d.with_cond_z(CondZ {
            alpha: 0.5,
            gamma: 0.0,
            g: Arc::new(|_| 0.0),
        })?;
        d.with_cond_a(CondA {
            mu: 0.0,
            lambda: 0.0,
            bound: Arc::new(|_| 0.0),
        })
    }

    /// `f(t, y) = -y^+ * exp(b^4)`: produces a reflected solution whose
    /// compensator has no finite moments in the continuum limit.
    pub fn counterexample7() -> Result<Self> {
        let d = Self::new("counterexample7", 0.0, 0.0, |_t, b, y, _z| {
            -pospart_times_exp(y, b.powi(4))
        })?
        .with_flags([Hypothesis::H2, Hypothesis::H3, Hypothesis::H4, Hypothesis::H5]);
        let d = d.with_cond_z(CondZ {
            alpha: 0.5,
            gamma: 0.0,
            g: Arc::new(|_| 0.0),
        })?;
        d.with_cond_a(CondA {
            mu: 0.0,
            lambda: 0.0,
            bound: Arc::new(|_| 0.0),
        })
    }

    /// `f(t, y, z) = -g*y + c*(1 + |z|)^q` with `q` in (0, 1): Lipschitz and
    /// sublinear in `z`, monotone in `y`.
    pub fn powerz(g: f64, c: f64, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Parameter(format!(
                "powerz exponent must lie in (0,1), got {q}"
            )));
        }
        if g < 0.0 || c < 0.0 {
            return Err(Error::Parameter(
                "powerz coefficients must be nonnegative".into(),
            ));
        }
        let d = Self::new(
            format!("powerz({g},{c},{q})"),
            -g,
            c * q,
            move |_t, _x, y, z| -g * y + c * (1.0 + z.abs()).powf(q),
        )?
        .with_flags([Hypothesis::H2, Hypothesis::H3, Hypothesis::H4, Hypothesis::H5]);
        d.with_cond_z(CondZ {
            alpha: q,
            gamma: c,
            g: Arc::new(|_| 1.0),
        })
    }
}

// --- implicit one-step solve -------------------------------------------------

/// One backward-Euler cell: find `y` with
/// `y = target + h*f(t, b, y, z) + h*penalty*(y - barrier)^-`.
#[derive(Debug, Clone, Copy)]
pub struct StepProblem {
    pub t: f64,
    /// Brownian node value, forwarded to the driver.
    pub b: f64,
    /// Conditional-expectation target `c`.
    pub target: f64,
    pub z: f64,
    pub h: f64,
    pub penalty: f64,
    pub barrier: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub root_tol: f64,
    pub max_expand: u32,
    pub max_bisect: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            root_tol: 1e-12,
            max_expand: 64,
            max_bisect: 4096,
        }
    }
}

/// Residual of the implicit cell at `y`. Strictly increasing in `y` whenever
/// `h * max(mu, 0) < 1`; the penalty part only ever adds increasing slope.
fn residual(driver: &Driver, p: &StepProblem, y: f64) -> Result<f64> {
    let f = driver.eval(p.t, p.b, y, p.z);
    // +inf from a blow-up driver is a legitimate residual sign; NaN is not.
    if f.is_nan() {
        return Err(Error::DriverEval {
            t: p.t,
            b: p.b,
            y,
            z: p.z,
        });
    }
    let pen = match p.barrier {
        Some(l) if p.penalty > 0.0 => p.penalty * (l - y).max(0.0),
        _ => 0.0,
    };
    Ok(y - p.h * (f + pen) - p.target)
}

/// Solves the implicit cell by symmetric bracket expansion around the target
/// followed by bisection. Returns the root with `|residual| <= root_tol`.
pub fn implicit_step(driver: &Driver, p: &StepProblem, opts: &SolveOptions) -> Result<f64> {
    debug_assert!(p.h > 0.0);
    let phi = |y: f64| residual(driver, p, y);

    // The target is the exact root whenever the cell contributes nothing
    // (zero driver, inactive penalty); return it untouched in that case.
    if phi(p.target)?.abs() <= opts.root_tol {
        return Ok(p.target);
    }

    let mut width = 1.0f64.max(p.target.abs());
    let mut lo = p.target - width;
    let mut hi = p.target + width;
    let mut flo = phi(lo)?;
    let mut fhi = phi(hi)?;
    let mut attempts = 0;
    while flo > 0.0 || fhi < 0.0 {
        if attempts >= opts.max_expand {
            return Err(Error::NoRoot {
                attempts,
                target: p.target,
            });
        }
        width *= 2.0;
        if flo > 0.0 {
            lo = p.target - width;
            flo = phi(lo)?;
        }
        if fhi < 0.0 {
            hi = p.target + width;
            fhi = phi(hi)?;
        }
        attempts += 1;
    }
    if flo.abs() <= opts.root_tol {
        return Ok(lo);
    }
    if fhi.abs() <= opts.root_tol {
        return Ok(hi);
    }

    let mut best = 0.5 * (lo + hi);
    for _ in 0..opts.max_bisect {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval collapsed to adjacent floats
        }
        let fmid = phi(mid)?;
        best = mid;
        if fmid.abs() <= opts.root_tol {
            return Ok(mid);
        }
        if fmid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // The interval degenerated without meeting the tolerance: only possible
    // when the residual jumps by more than root_tol between adjacent floats.
    let fbest = phi(best)?;
    if fbest.abs() <= opts.root_tol {
        Ok(best)
    } else {
        Err(Error::NoRoot {
            attempts: opts.max_bisect,
            target: p.target,
        })
    }
}

// --- hypothesis probes --------------------------------------------------------

/// Sampling box for the probes, covering every argument a driver can read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub t: (f64, f64),
    pub b: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
}

impl Default for DomainBox {
    fn default() -> Self {
        Self {
            t: (0.0, 1.0),
            b: (-3.0, 3.0),
            y: (-5.0, 5.0),
            z: (-5.0, 5.0),
        }
    }
}

impl DomainBox {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("t", self.t), ("b", self.b), ("y", self.y), ("z", self.z)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Parameter(format!(
                    "probe box for {name} must be a finite interval, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub samples: usize,
    pub domain: DomainBox,
    pub seed: u64,
    pub tol: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            domain: DomainBox::default(),
            seed: 0,
            tol: 1e-9,
        }
    }
}

/// One sampled point where the probed inequality failed by more than `tol`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub b: f64,
    pub y: f64,
    /// Second y sample (monotonicity probe) or second z sample (Lipschitz
    /// probe); unused slots repeat the primary value.
    pub y2: f64,
    pub z: f64,
    pub z2: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationReport {
    pub hypothesis: String,
    pub checked: usize,
    pub violations: Vec<Violation>,
    /// Empirical worst value of the probe-specific ratio (e.g. the observed
    /// monotonicity constant). Meaningful even when there are no violations.
    pub worst_ratio: f64,
}

impl ViolationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const PROBE_BLOCK: usize = 1024;

fn sample_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Runs `per_sample` over seeded blocks and merges block results in block
/// order, so the report does not depend on thread scheduling.
fn run_probe(
    hypothesis: &str,
    opts: &ProbeOptions,
    per_sample: impl Fn(&mut ChaCha8Rng) -> (Option<Violation>, f64) + Sync,
) -> Result<ViolationReport> {
    opts.domain.validate()?;
    let blocks = opts.samples.div_ceil(PROBE_BLOCK);
    let partials = exec::map_indexed(blocks, |block| {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(block as u64);
        let count = PROBE_BLOCK.min(opts.samples - block * PROBE_BLOCK);
        let mut violations = Vec::new();
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..count {
            let (violation, ratio) = per_sample(&mut rng);
            if let Some(v) = violation {
                violations.push(v);
            }
            worst = worst.max(ratio);
        }
        (violations, worst)
    });
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (v, w) in partials {
        violations.extend(v);
        worst = worst.max(w);
    }
    Ok(ViolationReport {
        hypothesis: hypothesis.into(),
        checked: opts.samples,
        violations,
        worst_ratio: if worst.is_finite() { worst } else { 0.0 },
    })
}

/// Monotonicity in `y`: `(f(t,y,z) - f(t,y',z)) * (y - y') <= mu * (y - y')^2`.
pub fn probe_h3(driver: &Driver, opts: &ProbeOptions) -> Result<ViolationReport> {
    let mu = driver.mu();
    run_probe("H3", opts, |rng| {
        let t = sample_in(rng, opts.domain.t);
        let b = sample_in(rng, opts.domain.b);
        let y = sample_in(rng, opts.domain.y);
        let y2 = sample_in(rng, opts.domain.y);
        let z = sample_in(rng, opts.domain.z);
        if y == y2 {
            return (None, f64::NEG_INFINITY);
        }
        let dy = y - y2;
        let lhs = (driver.eval(t, b, y, z) - driver.eval(t, b, y2, z)) * dy;
        let rhs = mu * dy * dy;
        let ratio = lhs / (dy * dy);
        let violation = (lhs - rhs > opts.tol).then_some(Violation {
            t,
            b,
            y,
            y2,
            z,
            z2: z,
            lhs,
            rhs,
        });
        (violation, ratio)
    })
}

/// Lipschitz continuity in `z`: `|f(t,y,z) - f(t,y,z')| <= lambda * |z - z'|`.
pub fn probe_h2(driver: &Driver, opts: &ProbeOptions) -> Result<ViolationReport> {
    let lambda = driver.lambda();
    run_probe("H2", opts, |rng| {
        let t = sample_in(rng, opts.domain.t);
        let b = sample_in(rng, opts.domain.b);
        let y = sample_in(rng, opts.domain.y);
        let z = sample_in(rng, opts.domain.z);
        let z2 = sample_in(rng, opts.domain.z);
        if z == z2 {
            return (None, f64::NEG_INFINITY);
        }
        let lhs = (driver.eval(t, b, y, z) - driver.eval(t, b, y, z2)).abs();
        let rhs = lambda * (z - z2).abs();
        let ratio = lhs / (z - z2).abs();
        let violation = (lhs - rhs > opts.tol).then_some(Violation {
            t,
            b,
            y,
            y2: y,
            z,
            z2,
            lhs,
            rhs,
        });
        (violation, ratio)
    })
}

/// Sublinear z-increment: `|f(t,y,z) - f(t,y,0)| <= gamma*(g(t)+|y|+|z|)^alpha`.
pub fn probe_cond_z(driver: &Driver, opts: &ProbeOptions) -> Result<ViolationReport> {
    let cond = driver
        .cond_z()
        .ok_or_else(|| Error::Config("driver declares no (Z) parameters".into()))?
        .clone();
    run_probe("Z", opts, |rng| {
        let t = sample_in(rng, opts.domain.t);
        let b = sample_in(rng, opts.domain.b);
        let y = sample_in(rng, opts.domain.y);
        let z = sample_in(rng, opts.domain.z);
        let lhs = (driver.eval(t, b, y, z) - driver.eval(t, b, y, 0.0)).abs();
        let base = (cond.g)(t) + y.abs() + z.abs();
        let rhs = cond.gamma * base.powf(cond.alpha);
        let ratio = if base > 0.0 { lhs / base.powf(cond.alpha) } else { 0.0 };
        let violation = (lhs - rhs > opts.tol).then_some(Violation {
            t,
            b,
            y,
            y2: y,
            z,
            z2: 0.0,
            lhs,
            rhs,
        });
        (violation, ratio)
    })
}

/// Signed growth bound: `sign(y)*f(t,y,z) <= bound(t) + mu*|y| + lambda*|z|`.
pub fn probe_cond_a(driver: &Driver, opts: &ProbeOptions) -> Result<ViolationReport> {
    let cond = driver
        .cond_a()
        .ok_or_else(|| Error::Config("driver declares no (A) parameters".into()))?
        .clone();
    run_probe("A", opts, |rng| {
        let t = sample_in(rng, opts.domain.t);
        let b = sample_in(rng, opts.domain.b);
        let y = sample_in(rng, opts.domain.y);
        let z = sample_in(rng, opts.domain.z);
        let sign = if y == 0.0 { 0.0 } else { y.signum() };
        let lhs = sign * driver.eval(t, b, y, z);
        let rhs = (cond.bound)(t) + cond.mu * y.abs() + cond.lambda * z.abs();
        let violation = (lhs - rhs > opts.tol).then_some(Violation {
            t,
            b,
            y,
            y2: y,
            z,
            z2: z,
            lhs,
            rhs,
        });
        (violation, lhs - rhs)
    })
}
