//! Structured sources and the multiplicative speckle channel.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// i.i.d. samples from `(1 - q0) delta(x_min) + q0 Uniform(x_min, x_max)`.
    MemorylessSpikeSlab,
    /// First-order Markov chain that holds its value with probability `1 - q0`
    /// and otherwise redraws from `Uniform(x_min, x_max)`.
    PiecewiseMarkov,
}

/// Parameters of a structured source. The continuous innovation is always
/// uniform on `[x_min, x_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub kind: SourceKind,
    pub q0: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl SourceModel {
    pub fn new(kind: SourceKind, q0: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q0) {
            return Err(Error::invalid(format!("q0 must lie in [0, 1], got {q0}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_min < 0.0 || x_min >= x_max {
            return Err(Error::invalid(format!(
                "amplitude bounds must satisfy 0 <= x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            kind,
            q0,
            x_min,
            x_max,
        })
    }

    /// Piecewise-constant Markov source on `[x_min, x_max)`.
    pub fn markov(q0: f64, x_min: f64, x_max: f64) -> Result<Self> {
        Self::new(SourceKind::PiecewiseMarkov, q0, x_min, x_max)
    }

    pub fn spike_slab(q0: f64, x_min: f64, x_max: f64) -> Result<Self> {
        Self::new(SourceKind::MemorylessSpikeSlab, q0, x_min, x_max)
    }

    fn innovation(&self) -> Uniform<f64> {
        Uniform::new(self.x_min, self.x_max).expect("bounds validated at construction")
    }

    /// `E[X^2]` of the stationary marginal.
    pub fn second_moment(&self) -> f64 {
        let uniform = uniform_second_moment(self.x_min, self.x_max);
        match self.kind {
            SourceKind::PiecewiseMarkov => uniform,
            SourceKind::MemorylessSpikeSlab => {
                (1.0 - self.q0) * self.x_min * self.x_min + self.q0 * uniform
            }
        }
    }
}

fn uniform_second_moment(lo: f64, hi: f64) -> f64 {
    // (hi^3 - lo^3) / (3 (hi - lo)) without the cancellation.
    (hi * hi + hi * lo + lo * lo) / 3.0
}

/// A clean signal together with its run-length structure.
///
/// Jump indices are 0-based positions of the first sample of each new
/// segment, so `values[j - 1] != values[j]` for every listed `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSignal {
    values: Vec<f64>,
    jump_indices: Vec<usize>,
    segment_lengths: Vec<usize>,
}

impl PiecewiseSignal {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("signal must contain at least one sample"));
        }
        let jump_indices = jumps_of(&values);
        let segment_lengths = segment_lengths(values.len(), &jump_indices);
        Ok(Self {
            values,
            jump_indices,
            segment_lengths,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn jump_indices(&self) -> &[usize] {
        &self.jump_indices
    }

    pub fn segment_lengths(&self) -> &[usize] {
        &self.segment_lengths
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_jumps(&self) -> usize {
        self.jump_indices.len()
    }

    /// `(start, length, amplitude)` for every constant segment.
    pub fn segments(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let mut start = 0;
        self.segment_lengths.iter().map(move |&len| {
            let seg = (start, len, self.values[start]);
            start += len;
            seg
        })
    }
}

pub(crate) fn jumps_of(values: &[f64]) -> Vec<usize> {
    (1..values.len())
        .filter(|&i| values[i] != values[i - 1])
        .collect()
}

pub(crate) fn segment_lengths(n: usize, jumps: &[usize]) -> Vec<usize> {
    let mut lengths = Vec::with_capacity(jumps.len() + 1);
    let mut start = 0;
    for &j in jumps.iter().chain(std::iter::once(&n)) {
        lengths.push(j - start);
        start = j;
    }
    lengths
}

/// Clean signal, its speckled observation and the seed that produced both.
#[derive(Debug, Clone)]
pub struct SpeckledPair {
    pub clean: PiecewiseSignal,
    pub noisy: Vec<f64>,
    pub seed: u64,
}

impl SpeckledPair {
    /// Draw a clean signal from `model` and pass it through the speckle
    /// channel, both from a single seeded stream.
    pub fn generate(model: &SourceModel, n: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let clean = match model.kind {
            SourceKind::PiecewiseMarkov => markov_with(model, n, &mut rng)?,
            SourceKind::MemorylessSpikeSlab => {
                PiecewiseSignal::from_values(memoryless_with(model, n, &mut rng)?)?
            }
        };
        let noisy = speckle_with(clean.values(), &mut rng);
        Ok(Self { clean, noisy, seed })
    }
}

pub fn sample_piecewise_markov(model: &SourceModel, n: usize, seed: u64) -> Result<PiecewiseSignal> {
    if model.kind != SourceKind::PiecewiseMarkov {
        return Err(Error::invalid("sample_piecewise_markov needs a PiecewiseMarkov model"));
    }
    markov_with(model, n, &mut seeded(seed))
}

pub fn sample_memoryless(model: &SourceModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    if model.kind != SourceKind::MemorylessSpikeSlab {
        return Err(Error::invalid("sample_memoryless needs a MemorylessSpikeSlab model"));
    }
    memoryless_with(model, n, &mut seeded(seed))
}

/// `y_i = x_i * w_i` with `w_i` i.i.d. standard normal.
pub fn apply_speckle(x: &[f64], seed: u64) -> Vec<f64> {
    speckle_with(x, &mut seeded(seed))
}

/// Raw Markov sample path, used where jump bookkeeping is not needed.
pub(crate) fn markov_values_with<R: Rng + ?Sized>(
    model: &SourceModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("signal length must be positive"));
    }
    let innovation = model.innovation();
    let mut values = Vec::with_capacity(n);
    // Stationary start.
    let mut current = innovation.sample(rng);
    values.push(current);
    for _ in 1..n {
        if rng.random::<f64>() < model.q0 {
            current = innovation.sample(rng);
        }
        values.push(current);
    }
    Ok(values)
}

pub(crate) fn markov_with<R: Rng + ?Sized>(
    model: &SourceModel,
    n: usize,
    rng: &mut R,
) -> Result<PiecewiseSignal> {
    PiecewiseSignal::from_values(markov_values_with(model, n, rng)?)
}

pub(crate) fn memoryless_with<R: Rng + ?Sized>(
    model: &SourceModel,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("signal length must be positive"));
    }
    let innovation = model.innovation();
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() < model.q0 {
                innovation.sample(rng)
            } else {
                model.x_min
            }
        })
        .collect())
}

pub(crate) fn speckle_with<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let w: f64 = StandardNormal.sample(rng);
            xi * w
        })
        .collect()
}
