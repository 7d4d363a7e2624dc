//! Weight tables `w(a^k) = -ln P([X^k]_b = a^k)` over quantized patterns.
//!
//! A table is the learned prior of the despeckler. It is trained by counting
//! k-windows of a long quantized sample path, or computed exactly for the
//! piecewise-constant Markov source. Patterns that never occur receive a
//! finite `cap` weight so every trellis state stays reachable.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::quantization::Quantizer;
use crate::rng::seeded;
use crate::sources::{markov_values_with, memoryless_with, SourceKind, SourceModel};
use crate::{Error, Result};

pub const WEIGHTS_FILE_VERSION: u64 = 1;

/// Largest memory order accepted for stored tables.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Empirical { q0: f64, samples: u64, seed: u64 },
    Analytic { q0: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    k: usize,
    quantizer: Quantizer,
    /// Pattern (alphabet indices, oldest first) to weight, in nats.
    entries: BTreeMap<Vec<usize>, f64>,
    cap: f64,
    provenance: Provenance,
}

impl WeightTable {
    pub fn order(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> u32 {
        self.quantizer.bits()
    }

    pub fn quantizer(&self) -> &Quantizer {
        &self.quantizer
    }

    pub fn alphabet(&self) -> &[f64] {
        self.quantizer.alphabet()
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn entries(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.entries
    }

    /// Weight of a pattern given as alphabet indices; `cap` if unseen.
    pub fn weight(&self, pattern: &[usize]) -> f64 {
        self.entries.get(pattern).copied().unwrap_or(self.cap)
    }

    /// Weight of a pattern given as quantization levels.
    pub fn weight_of_levels(&self, levels: &[f64]) -> Result<f64> {
        let idx = levels
            .iter()
            .map(|&l| {
                self.quantizer
                    .index_of_level(l)
                    .ok_or_else(|| Error::invalid(format!("{l} is not an alphabet level")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.weight(&idx))
    }

    /// Dense table of length `|alphabet|^k`; the oldest symbol is the most
    /// significant digit of the index.
    pub fn dense(&self) -> Vec<f64> {
        let a = self.quantizer.len();
        let mut table = vec![self.cap; a.pow(self.k as u32)];
        for (pattern, &w) in &self.entries {
            table[pattern_index(pattern, a)] = w;
        }
        table
    }

    /// Build a table by counting the k-windows of `values` quantized with `quantizer`.
    pub fn from_samples(
        values: &[f64],
        k: usize,
        quantizer: Quantizer,
        provenance: Provenance,
    ) -> Result<Self> {
        check_order(k)?;
        let a = quantizer.len();
        let states = a.pow(k as u32);
        if values.len() < 10 * states {
            return Err(Error::invalid(format!(
                "{} samples are too few for {states} patterns (need at least {})",
                values.len(),
                10 * states
            )));
        }
        let symbols = values
            .iter()
            .map(|&x| {
                quantizer
                    .index_of_value(x)
                    .ok_or_else(|| Error::invalid(format!("sample {x} outside the quantizer domain")))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut counts = vec![0u64; states];
        for w in symbols.windows(k) {
            counts[pattern_index(w, a)] += 1;
        }
        let windows = (symbols.len() - k + 1) as f64;
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (pattern_digits(i, a, k), -(c as f64 / windows).ln()))
            .collect();
        let cap = (values.len() as f64 * states as f64).ln();
        Ok(Self {
            k,
            quantizer,
            entries,
            cap,
            provenance,
        })
    }
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 || k > MAX_ORDER {
        return Err(Error::invalid(format!(
            "memory order must be in 1..={MAX_ORDER}, got {k}"
        )));
    }
    Ok(())
}

pub(crate) fn pattern_index(pattern: &[usize], a: usize) -> usize {
    pattern.iter().fold(0, |acc, &s| acc * a + s)
}

pub(crate) fn pattern_digits(mut index: usize, a: usize, k: usize) -> Vec<usize> {
    let mut digits = vec![0; k];
    for d in digits.iter_mut().rev() {
        *d = index % a;
        index /= a;
    }
    digits
}

/// Train a table from `samples` draws of `model`, quantized at `b` bits.
pub fn train_weights(
    model: &SourceModel,
    k: usize,
    b: u32,
    samples: usize,
    seed: u64,
) -> Result<WeightTable> {
    check_order(k)?;
    let quantizer = Quantizer::new(b, model.x_min, model.x_max)?;
    let needed = 10 * quantizer.len().pow(k as u32);
    if samples < needed {
        return Err(Error::invalid(format!(
            "{samples} training samples are too few; need at least {needed}"
        )));
    }
    let mut rng = seeded(seed);
    let values = match model.kind {
        SourceKind::PiecewiseMarkov => markov_values_with(model, samples, &mut rng)?,
        SourceKind::MemorylessSpikeSlab => memoryless_with(model, samples, &mut rng)?,
    };
    WeightTable::from_samples(
        &values,
        k,
        quantizer,
        Provenance::Empirical {
            q0: model.q0,
            samples: samples as u64,
            seed,
        },
    )
}

/// Exact pair weights of the piecewise-constant Markov source:
/// `P(a, a') = pi(a) [(1 - q0) 1{a = a'} + q0 pi(a')]`, where `pi` is the
/// uniform mass of each quantization cell.
///
/// Pairs of probability zero (only when `q0` is 0 or 1) are left out and
/// priced at `cap`, the largest finite weight.
pub fn analytic_weights_markov(model: &SourceModel, b: u32) -> Result<WeightTable> {
    if model.kind != SourceKind::PiecewiseMarkov {
        return Err(Error::invalid("analytic weights need a PiecewiseMarkov model"));
    }
    let quantizer = Quantizer::new(b, model.x_min, model.x_max)?;
    let width = model.x_max - model.x_min;
    let step = quantizer.step();
    let mass: Vec<f64> = quantizer
        .alphabet()
        .iter()
        .map(|&lo| ((lo + step).min(model.x_max) - lo.max(model.x_min)) / width)
        .collect();

    let mut entries = BTreeMap::new();
    for (i, &pi) in mass.iter().enumerate() {
        for (j, &pj) in mass.iter().enumerate() {
            let hold = if i == j { 1.0 - model.q0 } else { 0.0 };
            let p = pi * (hold + model.q0 * pj);
            if p > 0.0 {
                entries.insert(vec![i, j], -p.ln());
            }
        }
    }
    let cap = entries.values().copied().fold(0.0, f64::max);
    Ok(WeightTable {
        k: 2,
        quantizer,
        entries,
        cap,
        provenance: Provenance::Analytic { q0: model.q0 },
    })
}

/// Constant offset of the jump penalty for the Markov source:
/// `-lambda ln q0 - ln(1 - q0 + q0 2^-b)`.
///
/// Not to be confused with the source second moment `E[X^2]`.
pub fn regularizer_offset(lambda: f64, q0: f64, b: u32) -> f64 {
    -lambda * q0.ln() - (1.0 - q0 + q0 * (-(b as f64)).exp2()).ln()
}

/// Per-sample penalty scale of the memoryless spike-slab source,
/// `(1/b) ln((1 - q0)/q0 + 2^-b)`.
pub fn memoryless_gamma(q0: f64, b: u32) -> f64 {
    ((1.0 - q0) / q0 + (-(b as f64)).exp2()).ln() / b as f64
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightsFile {
    version: u64,
    k: usize,
    b: u32,
    x_m: f64,
    #[serde(rename = "x_M")]
    x_max: f64,
    log_base: String,
    cap: f64,
    provenance: Provenance,
    entries: Vec<FileEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileEntry {
    pattern: Vec<f64>,
    weight: f64,
}

/// Write a table as versioned JSON. Floats use the shortest representation
/// that parses back to the same bits.
pub fn save_weights(table: &WeightTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let alphabet = table.alphabet();
    let file = WeightsFile {
        version: WEIGHTS_FILE_VERSION,
        k: table.k,
        b: table.bits(),
        x_m: table.quantizer.x_min(),
        x_max: table.quantizer.x_max(),
        log_base: "e".into(),
        cap: table.cap,
        provenance: table.provenance.clone(),
        entries: table
            .entries
            .iter()
            .map(|(p, &w)| FileEntry {
                pattern: p.iter().map(|&i| alphabet[i]).collect(),
                weight: w,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::malformed(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weights(&text, path)
}

fn parse_weights(text: &str, path: &Path) -> Result<WeightTable> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::malformed(path, e.to_string()))?;
    let version = raw
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::malformed(path, "missing integer field `version`"))?;
    if version != WEIGHTS_FILE_VERSION {
        return Err(Error::Version {
            found: version,
            expected: WEIGHTS_FILE_VERSION,
        });
    }
    let file: WeightsFile =
        serde_json::from_value(raw).map_err(|e| Error::malformed(path, e.to_string()))?;
    if file.log_base != "e" {
        return Err(Error::Inconsistent(format!(
            "log_base must be \"e\", got {:?}",
            file.log_base
        )));
    }
    check_order(file.k).map_err(|e| Error::Inconsistent(e.to_string()))?;
    let quantizer = Quantizer::new(file.b, file.x_m, file.x_max)
        .map_err(|e| Error::Inconsistent(e.to_string()))?;
    if !(file.cap.is_finite() && file.cap >= 0.0) {
        return Err(Error::Inconsistent(format!("cap {} is not a finite non-negative weight", file.cap)));
    }

    let mut entries = BTreeMap::new();
    let mut mass = 0.0;
    for entry in &file.entries {
        if entry.pattern.len() != file.k {
            return Err(Error::Inconsistent(format!(
                "pattern {:?} has length {}, expected k = {}",
                entry.pattern,
                entry.pattern.len(),
                file.k
            )));
        }
        let pattern = entry
            .pattern
            .iter()
            .map(|&l| {
                quantizer.index_of_level(l).ok_or_else(|| {
                    Error::Inconsistent(format!(
                        "level {l} is outside the {}-bit alphabet on [{}, {})",
                        file.b, file.x_m, file.x_max
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !(entry.weight >= 0.0 && entry.weight <= file.cap) {
            return Err(Error::Inconsistent(format!(
                "weight {} of pattern {:?} is outside [0, cap]",
                entry.weight, entry.pattern
            )));
        }
        mass += (-entry.weight).exp();
        if entries.insert(pattern, entry.weight).is_some() {
            return Err(Error::Inconsistent(format!("duplicate pattern {:?}", entry.pattern)));
        }
    }
    if mass > 1.0 + 1e-9 {
        return Err(Error::Inconsistent(format!(
            "pattern probabilities sum to {mass} > 1"
        )));
    }
    Ok(WeightTable {
        k: file.k,
        quantizer,
        entries,
        cap: file.cap,
        provenance: file.provenance,
    })
}
