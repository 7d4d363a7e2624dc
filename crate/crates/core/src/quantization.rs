//! Dyadic `b`-bit quantization and k-th order empirical distributions.

use std::collections::BTreeMap;

use crate::{Error, Result};

/// `2^-b * floor(2^b * x)`.
///
/// Scaling by a power of two is exact in binary floating point, so the only
/// rounding is the floor itself.
pub fn quantize_scalar(x: f64, b: u32) -> f64 {
    let scale = (b as f64).exp2();
    (x * scale).floor() / scale
}

/// Quantizer for amplitudes supported on `[x_min, x_max)`.
///
/// The alphabet holds every level `j * 2^-b` whose cell `[j 2^-b, (j+1) 2^-b)`
/// intersects the support. The upper bound is excluded: under a continuous
/// innovation it is attained with probability zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    b: u32,
    x_min: f64,
    x_max: f64,
    first: i64,
    levels: Vec<f64>,
}

impl Quantizer {
    pub fn new(b: u32, x_min: f64, x_max: f64) -> Result<Self> {
        if b == 0 || b > 16 {
            return Err(Error::invalid(format!("bit depth must be in 1..=16, got {b}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::invalid(format!(
                "quantizer domain must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        let scale = (b as f64).exp2();
        let first = (x_min * scale).floor() as i64;
        let end = (x_max * scale).ceil() as i64;
        let levels = (first..end).map(|j| j as f64 / scale).collect();
        Ok(Self {
            b,
            x_min,
            x_max,
            first,
            levels,
        })
    }

    pub fn bits(&self) -> u32 {
        self.b
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Cell width `2^-b`.
    pub fn step(&self) -> f64 {
        (-(self.b as f64)).exp2()
    }

    /// Sorted, distinct quantization levels (cell lower edges).
    pub fn alphabet(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Alphabet index of the cell containing `x`, if that cell is in the alphabet.
    pub fn index_of_value(&self, x: f64) -> Option<usize> {
        let j = (x * (self.b as f64).exp2()).floor() as i64 - self.first;
        (0..self.levels.len() as i64).contains(&j).then_some(j as usize)
    }

    /// Alphabet index of an exact level.
    pub fn index_of_level(&self, level: f64) -> Option<usize> {
        self.index_of_value(level)
            .filter(|&i| self.levels[i] == level)
    }

    /// Cell midpoint used as the amplitude of a level in the likelihood.
    pub fn representative(&self, level: f64) -> Result<f64> {
        match self.index_of_level(level) {
            Some(i) => Ok(self.representative_at(i)),
            None => Err(Error::invalid(format!(
                "{level} is not a level of the {}-bit alphabet on [{}, {})",
                self.b, self.x_min, self.x_max
            ))),
        }
    }

    pub(crate) fn representative_at(&self, index: usize) -> f64 {
        self.levels[index] + 0.5 * self.step()
    }

    pub fn representatives(&self) -> Vec<f64> {
        (0..self.levels.len()).map(|i| self.representative_at(i)).collect()
    }
}

/// `level + 2^-(b+1)`, the midpoint of the cell of a level at bit depth `b`.
pub fn representative(level: f64, b: u32) -> f64 {
    level + (-(b as f64) - 1.0).exp2()
}

/// k-th order empirical distribution of a symbol sequence.
///
/// Counts are taken over the `n - k + 1` sliding windows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistMap<T: Ord> {
    k: usize,
    total: u64,
    counts: BTreeMap<Vec<T>, u64>,
}

impl<T: Ord + Clone> DistMap<T> {
    pub fn order(&self) -> usize {
        self.k
    }

    /// Number of windows, `n - k + 1`.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, pattern: &[T]) -> u64 {
        self.counts.get(pattern).copied().unwrap_or(0)
    }

    pub fn probability(&self, pattern: &[T]) -> f64 {
        self.count(pattern) as f64 / self.total as f64
    }

    pub fn counts(&self) -> &BTreeMap<Vec<T>, u64> {
        &self.counts
    }

    pub fn probabilities(&self) -> impl Iterator<Item = (&[T], f64)> + '_ {
        let total = self.total as f64;
        self.counts
            .iter()
            .map(move |(p, &c)| (p.as_slice(), c as f64 / total))
    }

    /// Merge counts of another shard. Shards must have been cut with `k - 1`
    /// samples of overlap so that no window is counted twice or lost.
    pub fn merge(&mut self, other: &DistMap<T>) -> Result<()> {
        if other.k != self.k {
            return Err(Error::invalid("cannot merge distributions of different order"));
        }
        self.total += other.total;
        for (p, &c) in &other.counts {
            *self.counts.entry(p.clone()).or_insert(0) += c;
        }
        Ok(())
    }
}

pub fn empirical_k_dist<T: Ord + Clone>(symbols: &[T], k: usize) -> Result<DistMap<T>> {
    if k == 0 {
        return Err(Error::invalid("distribution order must be positive"));
    }
    if symbols.len() < k {
        return Err(Error::invalid(format!(
            "sequence of length {} is shorter than the order {k}",
            symbols.len()
        )));
    }
    let mut counts = BTreeMap::new();
    for w in symbols.windows(k) {
        *counts.entry(w.to_vec()).or_insert(0u64) += 1;
    }
    Ok(DistMap {
        k,
        total: (symbols.len() - k + 1) as u64,
        counts,
    })
}
