//! Path-wise expectations over the lattice.
//!
//! Norms of running suprema and compensator moments are genuinely
//! path-dependent, so they cannot be read off node fields. Two evaluation
//! modes exist: exact enumeration of all `2^N` paths (capped, since the count
//! doubles per step) and seeded uniform sampling. Sampling is blocked and
//! each block draws from its own ChaCha stream, so results are independent of
//! thread count and reproducible from the seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

pub const DEFAULT_ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PathMode {
    /// All `2^N` paths, each with weight `2^-N`.
    Exact,
    /// `count` uniformly drawn paths from the given seed.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathPlan {
    #[serde(flatten)]
    pub mode: PathMode,
    pub enumeration_cap: usize,
}

impl PathPlan {
    pub fn exact() -> Self {
        Self {
            mode: PathMode::Exact,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    pub fn sampled(count: usize, seed: u64) -> Self {
        Self {
            mode: PathMode::Sampled { count, seed },
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    /// Exact enumeration while the lattice is small enough, sampling beyond.
    pub fn adaptive(steps: usize, count: usize, seed: u64) -> Self {
        if steps <= DEFAULT_ENUMERATION_CAP {
            Self::exact()
        } else {
            Self::sampled(count, seed)
        }
    }

    fn check(&self, steps: usize) -> Result<()> {
        match self.mode {
            PathMode::Exact => {
                if steps > self.enumeration_cap || steps > 62 {
                    Err(Error::Mode(format!(
                        "exact enumeration needs {steps} <= cap {}; use sampling",
                        self.enumeration_cap.min(62)
                    )))
                } else {
                    Ok(())
                }
            }
            PathMode::Sampled { count, .. } => {
                if count == 0 {
                    Err(Error::Mode("sampled mode needs at least one path".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// A mean estimated over paths, with a standard error in sampled mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: Option<f64>,
}

const BLOCK: usize = 4096;

fn fill_path(buf: &mut [usize], mut code: u64) {
    buf[0] = 0;
    for i in 1..buf.len() {
        buf[i] = buf[i - 1] + (code & 1) as usize;
        code >>= 1;
    }
}

fn fill_random_path(buf: &mut [usize], rng: &mut ChaCha8Rng) {
    let mut bits: u64 = 0;
    let mut left = 0u32;
    buf[0] = 0;
    for i in 1..buf.len() {
        if left == 0 {
            bits = rng.random();
            left = 64;
        }
        buf[i] = buf[i - 1] + (bits & 1) as usize;
        bits >>= 1;
        left -= 1;
    }
}

/// Mean of `stat` over lattice paths. The statistic receives the node index
/// `j_i` for every step `i` in `0..=steps`.
pub fn path_expectation(
    steps: usize,
    plan: &PathPlan,
    stat: &(dyn Fn(&[usize]) -> f64 + Sync),
) -> Result<Estimate> {
    plan.check(steps)?;
    match plan.mode {
        PathMode::Exact => {
            let total: u64 = 1 << steps;
            let blocks = (total as usize).div_ceil(BLOCK);
            let partials = exec::map_indexed(blocks, |blk| {
                let start = (blk * BLOCK) as u64;
                let end = total.min(start + BLOCK as u64);
                let mut buf = vec![0usize; steps + 1];
                let mut acc = 0.0;
                for code in start..end {
                    fill_path(&mut buf, code);
                    acc += stat(&buf);
                }
                acc
            });
            let sum: f64 = partials.iter().sum();
            Ok(Estimate {
                mean: sum / total as f64,
                std_error: None,
            })
        }
        PathMode::Sampled { count, seed } => {
            let blocks = count.div_ceil(BLOCK);
            let partials = exec::map_indexed(blocks, |blk| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(blk as u64);
                let in_block = BLOCK.min(count - blk * BLOCK);
                let mut buf = vec![0usize; steps + 1];
                let mut acc = 0.0;
                let mut acc_sq = 0.0;
                for _ in 0..in_block {
                    fill_random_path(&mut buf, &mut rng);
                    let v = stat(&buf);
                    acc += v;
                    acc_sq += v * v;
                }
                (acc, acc_sq)
            });
            let (sum, sum_sq) = partials
                .iter()
                .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
            let m = count as f64;
            let mean = sum / m;
            let variance = (sum_sq / m - mean * mean).max(0.0);
            Ok(Estimate {
                mean,
                std_error: Some((variance / m).sqrt()),
            })
        }
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln E[exp(log_stat(path))]`, accumulated entirely in log space so the
/// statistic may exceed the representable range by hundreds of orders of
/// magnitude. Sampling reports the log of the sample mean.
pub fn path_log_expectation(
    steps: usize,
    plan: &PathPlan,
    log_stat: &(dyn Fn(&[usize]) -> f64 + Sync),
) -> Result<f64> {
    plan.check(steps)?;
    let partials = match plan.mode {
        PathMode::Exact => {
            let total: u64 = 1 << steps;
            let blocks = (total as usize).div_ceil(BLOCK);
            exec::map_indexed(blocks, |blk| {
                let start = (blk * BLOCK) as u64;
                let end = total.min(start + BLOCK as u64);
                let mut buf = vec![0usize; steps + 1];
                let mut acc = f64::NEG_INFINITY;
                for code in start..end {
                    fill_path(&mut buf, code);
                    acc = log_add_exp(acc, log_stat(&buf));
                }
                acc
            })
        }
        PathMode::Sampled { count, seed } => {
            let blocks = count.div_ceil(BLOCK);
            exec::map_indexed(blocks, |blk| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(blk as u64);
                let in_block = BLOCK.min(count - blk * BLOCK);
                let mut buf = vec![0usize; steps + 1];
                let mut acc = f64::NEG_INFINITY;
                for _ in 0..in_block {
                    fill_random_path(&mut buf, &mut rng);
                    acc = log_add_exp(acc, log_stat(&buf));
                }
                acc
            })
        }
    };
    let log_total = match plan.mode {
        PathMode::Exact => steps as f64 * 2f64.ln(),
        PathMode::Sampled { count, .. } => (count as f64).ln(),
    };
    let mut acc = f64::NEG_INFINITY;
    for p in partials {
        acc = log_add_exp(acc, p);
    }
    Ok(acc - log_total)
}

/// Log-space sum `ln(sum_i exp(terms_i))` for node-indexed contributions.
pub fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    terms
        .into_iter()
        .fold(f64::NEG_INFINITY, log_add_exp)
}
