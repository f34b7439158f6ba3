//! Recombining binomial model of one-dimensional Brownian motion.
//!
//! Step `i` of the lattice carries `i + 1` nodes; node `(i, j)` sits at
//! `B(i, j) = (2j - i) * sqrt(h)` with symmetric up/down transition
//! probability 1/2. Increments match the first two moments of Brownian
//! increments, and the one-step conditional expectation and martingale
//! extraction below are exact on the lattice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time grid parameters: horizon `T` split into `N` equal steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub horizon: f64,
    pub steps: usize,
}

impl LatticeSpec {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidSpec("steps must be at least 1".into()));
        }
        Ok(Self { horizon, steps })
    }

    /// Step size `h = T / N`. Stored quantities are `T` and `N`; `h` is
    /// always derived so `h * N` cannot drift from `T`.
    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// The lattice itself. Node values are computed on demand from the spec, so
/// the structure is a few words and freely copyable across threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    spec: LatticeSpec,
    sqrt_h: f64,
}

pub fn build_lattice(spec: LatticeSpec) -> Result<Lattice> {
    // LatticeSpec::new already validated; re-validate to keep the
    // constructor total for specs built by deserialization.
    let spec = LatticeSpec::new(spec.horizon, spec.steps)?;
    Ok(Lattice {
        spec,
        sqrt_h: spec.step_size().sqrt(),
    })
}

impl Lattice {
    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn steps(&self) -> usize {
        self.spec.steps
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    pub fn step_size(&self) -> f64 {
        self.spec.step_size()
    }

    pub fn sqrt_step(&self) -> f64 {
        self.sqrt_h
    }

    /// Time coordinate of step `i`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.spec.steps {
            // Exact at the right endpoint regardless of rounding in h.
            self.spec.horizon
        } else {
            i as f64 * self.step_size()
        }
    }

    /// Brownian value at node `(i, j)`: `(2j - i) * sqrt(h)`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i <= self.spec.steps && j <= i);
        (2.0 * j as f64 - i as f64) * self.sqrt_h
    }

    /// All node values of layer `i`, ordered from lowest to highest.
    pub fn layer_values(&self, i: usize) -> Vec<f64> {
        (0..=i).map(|j| self.value(i, j)).collect()
    }

    fn check_layer(&self, next: &[f64], i: usize) -> Result<()> {
        if i >= self.spec.steps {
            return Err(Error::Shape(format!(
                "step index {i} out of range for {} steps",
                self.spec.steps
            )));
        }
        if next.len() != i + 2 {
            return Err(Error::Shape(format!(
                "layer at step {} must have {} entries, got {}",
                i + 1,
                i + 2,
                next.len()
            )));
        }
        Ok(())
    }
}

/// One-step conditional expectation: maps a layer at step `i + 1` down to
/// step `i` by averaging the two children of each node.
pub fn cond_expect(lattice: &Lattice, next: &[f64], i: usize) -> Result<Vec<f64>> {
    lattice.check_layer(next, i)?;
    Ok((0..=i).map(|j| 0.5 * (next[j + 1] + next[j])).collect())
}

/// Martingale-increment extraction: the discrete analogue of
/// `Z_t = E[Y_{t+h} dB | F_t] / h`, i.e. `(up - down) / (2 sqrt(h))`.
pub fn z_from_martingale(lattice: &Lattice, next: &[f64], i: usize) -> Result<Vec<f64>> {
    lattice.check_layer(next, i)?;
    let denom = 2.0 * lattice.sqrt_h;
    Ok((0..=i).map(|j| (next[j + 1] - next[j]) / denom).collect())
}

/// Step-indexed triangular array of per-node values.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    layers: Vec<Vec<f64>>,
}

impl NodeField {
    /// Wraps pre-built layers, enforcing the triangular shape and finiteness
    /// of every entry.
    pub fn from_layers(layers: Vec<Vec<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a node field needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.len() != i + 1 {
                return Err(Error::Shape(format!(
                    "layer {} has {} entries, expected {}",
                    i,
                    layer.len(),
                    i + 1
                )));
            }
            if let Some(v) = layer.iter().find(|v| !v.is_finite()) {
                return Err(Error::Shape(format!(
                    "non-finite value {v} in layer {i}"
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Samples `f(t, b)` at every node of the lattice.
    pub fn sample(lattice: &Lattice, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let layers = (0..=lattice.steps())
            .map(|i| {
                let t = lattice.time(i);
                (0..=i).map(|j| f(t, lattice.value(i, j))).collect()
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn zeros(steps: usize) -> Self {
        Self {
            layers: (0..=steps).map(|i| vec![0.0; i + 1]).collect(),
        }
    }

    /// Number of steps spanned (layers minus one).
    pub fn steps(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        &self.layers[i]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.layers[i][j]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, layer)| layer.iter().enumerate().map(move |(j, &v)| (i, j, v)))
    }

    /// Largest absolute node-wise difference; errors if shapes differ.
    pub fn max_abs_diff(&self, other: &NodeField) -> Result<f64> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape(format!(
                "node fields span {} vs {} layers",
                self.layers.len(),
                other.layers.len()
            )));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }
}
