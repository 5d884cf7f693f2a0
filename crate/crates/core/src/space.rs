//! Box domains and space-filling designs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[low_i, high_i]`. Degenerate axes (`low == high`) are allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() {
            return Err(Error::DimensionMismatch {
                expected: low.len(),
                got: high.len(),
            });
        }
        for (i, (l, h)) in low.iter().zip(&high).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(Error::Config(format!("bounds[{i}] = [{l}, {h}] is not a finite box")));
            }
        }
        Ok(Self { low, high })
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.high[i] - self.low[i]
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(v, (l, h))| v >= l && v <= h)
    }

    pub fn clip(&self, p: &mut [f64]) {
        for (v, (l, h)) in p.iter_mut().zip(self.low.iter().zip(&self.high)) {
            *v = v.clamp(*l, *h);
        }
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(u, (l, h))| (l + u * (h - l)).clamp(*l, *h))
            .collect()
    }

    /// Maps a point of the box into the unit cube (degenerate axes map to 0).
    pub fn to_unit(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(v, (l, h))| if h > l { (v - l) / (h - l) } else { 0.0 })
            .collect()
    }

    /// Concatenation of two boxes.
    pub fn join(&self, other: &Bounds) -> Bounds {
        Bounds {
            low: self.low.iter().chain(&other.low).copied().collect(),
            high: self.high.iter().chain(&other.high).copied().collect(),
        }
    }
}

/// Latin hypercube sample of `count` points: every one-dimensional projection
/// has exactly one point in each of `count` equal-width bins.
pub fn latin_hypercube(count: usize, bounds: &Bounds, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = bounds.dim();
    let mut unit = vec![vec![0.0; dim]; count];
    let mut bins: Vec<usize> = (0..count).collect();
    for j in 0..dim {
        bins.shuffle(&mut rng);
        for (row, &bin) in unit.iter_mut().zip(&bins) {
            let jitter: f64 = rng.random();
            row[j] = (bin as f64 + jitter) / count as f64;
        }
    }
    unit.iter().map(|u| bounds.from_unit(u)).collect()
}
