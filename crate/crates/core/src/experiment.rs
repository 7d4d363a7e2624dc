//! Benchmark harness: Table-style PSNR comparison, lambda sweeps and bound
//! curves on seeded synthetic datasets.
//!
//! All CSV output is a pure function of the configuration, so reruns with the
//! same configuration produce identical bytes. Wall-clock timings are kept
//! out of the metric CSVs and written to a separate timing file.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, speckle_cv, EnhancedBase, FilterConfig};
use crate::bounds::{corollary_bound, BoundReport, Convention};
use crate::despeckler::{bdqmap_b_viterbi, genie_ml, refine, DespecklerConfig};
use crate::io::{fmt_f64, write_text};
use crate::metrics::{mse, psnr};
use crate::rng::derive_seed;
use crate::sources::{SourceModel, SpeckledPair};
use crate::weights::{load_weights, train_weights, Provenance, WeightTable};
use crate::{Error, Result};

const STREAM_TRAIN: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_VALIDATION: u64 = 3;

/// Seed of test signal `index` for the source with jump probability `q0`.
pub fn test_seed(seed: u64, q0: f64, index: usize) -> u64 {
    derive_seed(seed, &[STREAM_TEST, q0.to_bits(), index as u64])
}

/// Seed of validation signal `index`; disjoint from the test stream.
pub fn validation_seed(seed: u64, q0: f64, index: usize) -> u64 {
    derive_seed(seed, &[STREAM_VALIDATION, q0.to_bits(), index as u64])
}

/// Seed used to train the weight table for `(q0, b)`.
pub fn training_seed(seed: u64, q0: f64, b: u32) -> u64 {
    derive_seed(seed, &[STREAM_TRAIN, q0.to_bits(), b as u64])
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// `n = 10^4`, 20 test signals.
    #[default]
    Desk,
    /// `n = 10^5`, 100 test signals.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::invalid(format!("unknown scale {other:?} (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `|y|` against the clean signal.
    Speckled,
    /// Closed-form PSNR of `|y|`, `MAX^2 / (E[X^2] (2 - 2 sqrt(2/pi)))`.
    SpeckledAnalytic,
    Boxcar,
    Frost,
    Tv,
    Lee,
    EnhancedLee,
    Kuan,
    EnhancedKuan,
    BdqmapB,
    Bdqmap,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Speckled,
        Method::SpeckledAnalytic,
        Method::Boxcar,
        Method::Frost,
        Method::Tv,
        Method::Lee,
        Method::EnhancedLee,
        Method::Kuan,
        Method::EnhancedKuan,
        Method::BdqmapB,
        Method::Bdqmap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Speckled => "speckled",
            Method::SpeckledAnalytic => "speckled_analytic",
            Method::Boxcar => "boxcar",
            Method::Frost => "frost",
            Method::Tv => "tv",
            Method::Lee => "lee",
            Method::EnhancedLee => "enhanced_lee",
            Method::Kuan => "kuan",
            Method::EnhancedKuan => "enhanced_kuan",
            Method::BdqmapB => "bdqmap_b",
            Method::Bdqmap => "bdqmap",
        }
    }

    fn uses_bits(self) -> bool {
        matches!(self, Method::BdqmapB | Method::Bdqmap)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scale: Scale,
    pub q0: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub num_signals: usize,
    pub validation_signals: usize,
    pub seed: u64,
    pub bits: Vec<u32>,
    pub k: usize,
    pub methods: Vec<Method>,
    pub lambda_grid: Vec<f64>,
    /// Fixed lambda; skips the validation search when set.
    pub lambda: Option<f64>,
    pub tv_grid: Vec<f64>,
    /// Fixed TV weight; skips the validation search when set.
    pub tv_weight: Option<f64>,
    pub c_w: f64,
    pub damping: f64,
    pub training_samples: usize,
    /// Weight table to use for the `(q0, b)` it was built for.
    pub weights: Option<PathBuf>,
    pub bound_q0: Vec<f64>,
    pub convention: Convention,
    pub output_dir: PathBuf,
}

/// Optional settings from a TOML file or the command line; unset fields keep
/// the value of the scale preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOverrides {
    pub scale: Option<Scale>,
    pub q0: Option<Vec<f64>>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n: Option<usize>,
    pub num_signals: Option<usize>,
    pub validation_signals: Option<usize>,
    pub seed: Option<u64>,
    pub bits: Option<Vec<u32>>,
    pub k: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub tv_grid: Option<Vec<f64>>,
    pub tv_weight: Option<f64>,
    pub c_w: Option<f64>,
    pub damping: Option<f64>,
    pub training_samples: Option<usize>,
    pub weights: Option<PathBuf>,
    pub bound_q0: Option<Vec<f64>>,
    pub convention: Option<Convention>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentOverrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(self, other: Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            scale, q0, x_min, x_max, n, num_signals, validation_signals, seed, bits, k, methods,
            lambda_grid, lambda, tv_grid, tv_weight, c_w, damping, training_samples, weights,
            bound_q0, convention, output_dir
        )
    }
}

impl ExperimentConfig {
    pub fn preset(scale: Scale) -> Self {
        let (n, num_signals) = match scale {
            Scale::Desk => (10_000, 20),
            Scale::Paper => (100_000, 100),
        };
        Self {
            scale,
            q0: vec![0.1, 0.01, 0.001],
            x_min: 0.0,
            x_max: 1.0,
            n,
            num_signals,
            validation_signals: 10,
            seed: 2024,
            bits: vec![2, 3],
            k: 2,
            methods: Method::ALL.to_vec(),
            lambda_grid: log_grid(1e-2, 1e2, 16),
            lambda: None,
            tv_grid: log_grid(1e-1, 1e3, 16),
            tv_weight: None,
            c_w: speckle_cv(),
            damping: 2.0,
            training_samples: 10_000_000,
            weights: None,
            bound_q0: vec![0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001],
            convention: Convention::Proof,
            output_dir: PathBuf::from("results"),
        }
    }

    /// Preset for the requested scale with the overrides applied, validated.
    pub fn resolve(o: ExperimentOverrides) -> Result<Self> {
        let base = Self::preset(o.scale.unwrap_or_default());
        let cfg = Self {
            scale: base.scale,
            q0: o.q0.unwrap_or(base.q0),
            x_min: o.x_min.unwrap_or(base.x_min),
            x_max: o.x_max.unwrap_or(base.x_max),
            n: o.n.unwrap_or(base.n),
            num_signals: o.num_signals.unwrap_or(base.num_signals),
            validation_signals: o.validation_signals.unwrap_or(base.validation_signals),
            seed: o.seed.unwrap_or(base.seed),
            bits: o.bits.unwrap_or(base.bits),
            k: o.k.unwrap_or(base.k),
            methods: o.methods.unwrap_or(base.methods),
            lambda_grid: o.lambda_grid.unwrap_or(base.lambda_grid),
            lambda: o.lambda.or(base.lambda),
            tv_grid: o.tv_grid.unwrap_or(base.tv_grid),
            tv_weight: o.tv_weight.or(base.tv_weight),
            c_w: o.c_w.unwrap_or(base.c_w),
            damping: o.damping.unwrap_or(base.damping),
            training_samples: o.training_samples.unwrap_or(base.training_samples),
            weights: o.weights.or(base.weights),
            bound_q0: o.bound_q0.unwrap_or(base.bound_q0),
            convention: o.convention.unwrap_or(base.convention),
            output_dir: o.output_dir.unwrap_or(base.output_dir),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.num_signals == 0 || self.validation_signals == 0 {
            return bad("num_signals and validation_signals must be positive".into());
        }
        for &q in self.q0.iter().chain(&self.bound_q0) {
            if !(q > 0.0 && q < 1.0) {
                return bad(format!("q0 values must lie in (0, 1), got {q}"));
            }
        }
        if self.q0.is_empty() {
            return bad("q0 list is empty".into());
        }
        SourceModel::markov(0.5, self.x_min, self.x_max)?;
        if self.bits.is_empty() || self.bits.iter().any(|&b| !(1..=8).contains(&b)) {
            return bad(format!("bits must be a non-empty list in 1..=8, got {:?}", self.bits));
        }
        if !(1..=3).contains(&self.k) {
            return bad(format!("k must be 1, 2 or 3, got {}", self.k));
        }
        let non_negative = |v: &f64| v.is_finite() && *v >= 0.0;
        if self.lambda_grid.is_empty() || !self.lambda_grid.iter().all(non_negative) {
            return bad("lambda_grid must be non-empty, finite and >= 0".into());
        }
        if self.tv_grid.is_empty() || !self.tv_grid.iter().all(non_negative) {
            return bad("tv_grid must be non-empty, finite and >= 0".into());
        }
        if !self.lambda.iter().all(non_negative) || !self.tv_weight.iter().all(non_negative) {
            return bad("fixed lambda and tv_weight must be finite and >= 0".into());
        }
        if !(self.c_w > 0.0 && self.c_w.is_finite()) || !(self.damping > 0.0 && self.damping.is_finite()) {
            return bad("c_w and damping must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("methods list is empty".into());
        }
        Ok(())
    }

    pub fn model(&self, q0: f64) -> Result<SourceModel> {
        SourceModel::markov(q0, self.x_min, self.x_max)
    }

    /// Filter settings for `q0`, with the window shrunk to fit the signal.
    pub fn filter_config(&self, q0: f64) -> Result<FilterConfig> {
        let mut f = FilterConfig::for_q0(q0)?;
        let largest_odd = if self.n % 2 == 1 { self.n } else { self.n - 1 };
        f.window = f.window.min(largest_odd);
        f.c_w = self.c_w;
        f.damping = self.damping;
        if let Some(w) = self.tv_weight {
            f.tv_weight = w;
        }
        Ok(f)
    }
}

/// One line of a metric CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: Method,
    pub q0: f64,
    pub b: Option<u32>,
    /// Selected hyperparameter: lambda for the quantized-MAP methods, the TV weight for `tv`.
    pub lambda: Option<f64>,
    pub mse: f64,
    pub psnr: f64,
    /// Seconds spent on the evaluated signals.
    pub wall_time: f64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str = "method,q0,b,lambda,mse,psnr";
    pub const TIMING_HEADER: &'static str = "method,q0,b,lambda,wall_time";

    fn key(&self) -> String {
        format!(
            "{},{},{},{}",
            self.method,
            fmt_f64(self.q0),
            self.b.map(|b| b.to_string()).unwrap_or_default(),
            self.lambda.map(fmt_f64).unwrap_or_default()
        )
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.key(), fmt_f64(self.mse), fmt_f64(self.psnr))
    }

    pub fn timing_row(&self) -> String {
        format!("{},{}", self.key(), fmt_f64(self.wall_time))
    }
}

pub fn metric_csv(rows: &[MetricRow]) -> String {
    csv_text(MetricRow::CSV_HEADER, rows.iter().map(MetricRow::csv_row))
}

pub fn timing_csv(rows: &[MetricRow]) -> String {
    csv_text(MetricRow::TIMING_HEADER, rows.iter().map(MetricRow::timing_row))
}

fn csv_text(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

/// Lambda picked on the validation set for one method and `(q0, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaChoice {
    pub method: Method,
    pub q0: f64,
    pub b: u32,
    pub lambda: f64,
    pub psnr: f64,
}

impl LambdaChoice {
    pub const CSV_HEADER: &'static str = "method,q0,b,lambda,psnr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method,
            fmt_f64(self.q0),
            self.b,
            fmt_f64(self.lambda),
            fmt_f64(self.psnr)
        )
    }
}

pub fn lambda_choice_csv(choices: &[LambdaChoice]) -> String {
    csv_text(LambdaChoice::CSV_HEADER, choices.iter().map(LambdaChoice::csv_row))
}

/// Closed-form PSNR of `|y|` for a source with second moment `eta2`.
pub fn speckled_analytic(eta2: f64, max_val: f64) -> (f64, f64) {
    let m = eta2 * (2.0 - 2.0 * (2.0 / PI).sqrt());
    (m, psnr(m, max_val))
}

struct Dataset {
    pairs: Vec<SpeckledPair>,
}

impl Dataset {
    fn generate(model: &SourceModel, n: usize, seeds: impl Iterator<Item = u64>) -> Result<Self> {
        let pairs = seeds
            .map(|s| SpeckledPair::generate(model, n, s))
            .collect::<Result<_>>()?;
        Ok(Self { pairs })
    }

    /// Mean over signals of the per-signal MSE of `estimate`.
    fn mean_mse(&self, mut estimate: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<f64> {
        let mut total = 0.0;
        for p in &self.pairs {
            total += mse(p.clean.values(), &estimate(&p.noisy)?)?;
        }
        Ok(total / self.pairs.len() as f64)
    }
}

/// Mean MSE of the trellis output and of its refinement, from one search per signal.
fn bdqmap_mses(data: &Dataset, table: &WeightTable, lambda: f64) -> Result<(f64, f64)> {
    let cfg = DespecklerConfig::new(lambda, table)?;
    let (mut quantized, mut refined) = (0.0, 0.0);
    for p in &data.pairs {
        let sol = bdqmap_b_viterbi(&p.noisy, &cfg)?;
        quantized += mse(p.clean.values(), &sol.amplitudes)?;
        refined += mse(p.clean.values(), &refine(&p.noisy, &sol)?)?;
    }
    let m = data.pairs.len() as f64;
    Ok((quantized / m, refined / m))
}

/// Everything needed to benchmark one source.
struct Bench<'c> {
    cfg: &'c ExperimentConfig,
    q0: f64,
    model: SourceModel,
    filters: FilterConfig,
    test: Dataset,
    validation: Dataset,
    tables: BTreeMap<u32, WeightTable>,
}

impl<'c> Bench<'c> {
    fn new(cfg: &'c ExperimentConfig, q0: f64, with_test: bool) -> Result<Self> {
        let model = cfg.model(q0)?;
        let test = if with_test {
            Dataset::generate(&model, cfg.n, (0..cfg.num_signals).map(|i| test_seed(cfg.seed, q0, i)))?
        } else {
            Dataset { pairs: Vec::new() }
        };
        let validation = Dataset::generate(
            &model,
            cfg.n,
            (0..cfg.validation_signals).map(|i| validation_seed(cfg.seed, q0, i)),
        )?;
        Ok(Self {
            cfg,
            q0,
            model,
            filters: cfg.filter_config(q0)?,
            test,
            validation,
            tables: BTreeMap::new(),
        })
    }

    fn table(&mut self, b: u32) -> Result<&WeightTable> {
        if !self.tables.contains_key(&b) {
            let table = self.load_or_train(b)?;
            self.tables.insert(b, table);
        }
        Ok(&self.tables[&b])
    }

    fn load_or_train(&self, b: u32) -> Result<WeightTable> {
        if let Some(path) = &self.cfg.weights {
            let table = load_weights(path)?;
            let q = match table.provenance() {
                Provenance::Empirical { q0, .. } | Provenance::Analytic { q0 } => *q0,
            };
            if table.bits() == b && table.order() == self.cfg.k && q == self.q0 {
                return Ok(table);
            }
        }
        train_weights(
            &self.model,
            self.cfg.k,
            b,
            self.cfg.training_samples,
            training_seed(self.cfg.seed, self.q0, b),
        )
    }

    /// Validation sweep over lambda for both quantized-MAP methods at `b`.
    fn sweep(&mut self, b: u32, grid: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        self.table(b)?;
        let table = &self.tables[&b];
        grid.iter()
            .map(|&l| bdqmap_mses(&self.validation, table, l).map(|(q, r)| (l, q, r)))
            .collect()
    }

    fn choose_lambdas(&mut self, b: u32) -> Result<[LambdaChoice; 2]> {
        let grid = match self.cfg.lambda {
            Some(l) => vec![l],
            None => self.cfg.lambda_grid.clone(),
        };
        let curve = self.sweep(b, &grid)?;
        let pick = |method: Method, get: fn(&(f64, f64, f64)) -> f64| {
            // First maximum of PSNR, i.e. first minimum of MSE.
            let best = curve
                .iter()
                .fold(None::<&(f64, f64, f64)>, |acc, c| match acc {
                    Some(a) if get(a) <= get(c) => Some(a),
                    _ => Some(c),
                })
                .expect("grid is non-empty");
            LambdaChoice {
                method,
                q0: self.q0,
                b,
                lambda: best.0,
                psnr: psnr(get(best), self.cfg.x_max),
            }
        };
        Ok([pick(Method::BdqmapB, |c| c.1), pick(Method::Bdqmap, |c| c.2)])
    }

    fn choose_tv_weight(&self) -> Result<f64> {
        if let Some(w) = self.cfg.tv_weight {
            return Ok(w);
        }
        let mut best = (f64::INFINITY, self.cfg.tv_grid[0]);
        for &w in &self.cfg.tv_grid {
            let m = self.validation.mean_mse(|y| baselines::tv_log(y, w))?;
            if m < best.0 {
                best = (m, w);
            }
        }
        Ok(best.1)
    }

    fn row(&self, method: Method, b: Option<u32>, lambda: Option<f64>, mse: f64, start: Instant) -> MetricRow {
        MetricRow {
            method,
            q0: self.q0,
            b,
            lambda,
            mse,
            psnr: psnr(mse, self.cfg.x_max),
            wall_time: start.elapsed().as_secs_f64(),
        }
    }

    fn filter_row(&self, method: Method) -> Result<MetricRow> {
        let f = self.filters;
        let start = Instant::now();
        let (lambda, m) = match method {
            Method::Speckled => (None, self.test.mean_mse(|y| Ok(baselines::amplitude(y)))?),
            Method::SpeckledAnalytic => {
                let (m, _) = speckled_analytic(self.model.second_moment(), self.cfg.x_max);
                (None, m)
            }
            Method::Boxcar => (None, self.test.mean_mse(|y| baselines::boxcar(&baselines::amplitude(y), f.window))?),
            Method::Frost => (
                None,
                self.test
                    .mean_mse(|y| baselines::frost(&baselines::amplitude(y), f.window, f.c_w, f.damping))?,
            ),
            Method::Lee => (None, self.test.mean_mse(|y| baselines::lee(&baselines::amplitude(y), f.window, f.c_w))?),
            Method::Kuan => (None, self.test.mean_mse(|y| baselines::kuan(&baselines::amplitude(y), f.window, f.c_w))?),
            Method::EnhancedLee | Method::EnhancedKuan => {
                let base = if method == Method::EnhancedLee { EnhancedBase::Lee } else { EnhancedBase::Kuan };
                (
                    None,
                    self.test
                        .mean_mse(|y| baselines::enhanced(base, &baselines::amplitude(y), f.window, f.c_w))?,
                )
            }
            Method::Tv => {
                let w = self.choose_tv_weight()?;
                let start = Instant::now();
                let m = self.test.mean_mse(|y| baselines::tv_log(y, w))?;
                return Ok(self.row(method, None, Some(w), m, start));
            }
            Method::BdqmapB | Method::Bdqmap => unreachable!("handled by bdqmap_rows"),
        };
        Ok(self.row(method, None, lambda, m, start))
    }

    fn bdqmap_rows(&mut self, b: u32, want_b: bool, want_refined: bool) -> Result<(Vec<MetricRow>, [LambdaChoice; 2])> {
        let choices = self.choose_lambdas(b)?;
        let table = &self.tables[&b];
        let mut rows = Vec::new();
        for (choice, wanted) in choices.iter().zip([want_b, want_refined]) {
            if !wanted {
                continue;
            }
            let start = Instant::now();
            let (q, r) = bdqmap_mses(&self.test, table, choice.lambda)?;
            let m = if choice.method == Method::BdqmapB { q } else { r };
            rows.push(self.row(choice.method, Some(b), Some(choice.lambda), m, start));
        }
        Ok((rows, choices))
    }
}

/// Result of [`run_table1`].
#[derive(Debug, Clone, PartialEq)]
pub struct Table1 {
    pub rows: Vec<MetricRow>,
    pub lambda_choices: Vec<LambdaChoice>,
}

impl Table1 {
    pub fn get(&self, method: Method, q0: f64, b: Option<u32>) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.q0 == q0 && r.b == b)
    }
}

/// PSNR of every configured method for every `q0`, averaged over the test set.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Table1> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut lambda_choices = Vec::new();
    for &q0 in &cfg.q0 {
        let mut bench = Bench::new(cfg, q0, true)?;
        for &m in &cfg.methods {
            if !m.uses_bits() {
                rows.push(bench.filter_row(m)?);
            }
        }
        let want_b = cfg.methods.contains(&Method::BdqmapB);
        let want_refined = cfg.methods.contains(&Method::Bdqmap);
        if want_b || want_refined {
            for &b in &cfg.bits {
                let (r, c) = bench.bdqmap_rows(b, want_b, want_refined)?;
                rows.extend(r);
                lambda_choices.extend(c.into_iter().filter(|c| cfg.methods.contains(&c.method)));
            }
        }
    }
    Ok(Table1 { rows, lambda_choices })
}

/// Result of [`run_lambda_sweep`]: one validation-set row per
/// `(q0, b, method, lambda)` and the lambda that maximizes PSNR.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSweep {
    pub rows: Vec<MetricRow>,
    pub best: Vec<LambdaChoice>,
}

pub fn run_lambda_sweep(cfg: &ExperimentConfig) -> Result<LambdaSweep> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut best = Vec::new();
    for &q0 in &cfg.q0 {
        let mut bench = Bench::new(cfg, q0, false)?;
        for &b in &cfg.bits {
            let start = Instant::now();
            let curve = bench.sweep(b, &cfg.lambda_grid)?;
            let per_point = start.elapsed().as_secs_f64() / curve.len() as f64;
            for &(l, q, r) in &curve {
                for (method, m) in [(Method::BdqmapB, q), (Method::Bdqmap, r)] {
                    rows.push(MetricRow {
                        method,
                        q0,
                        b: Some(b),
                        lambda: Some(l),
                        mse: m,
                        psnr: psnr(m, cfg.x_max),
                        wall_time: per_point,
                    });
                }
            }
            for method in [Method::BdqmapB, Method::Bdqmap] {
                let top = rows
                    .iter()
                    .filter(|r| r.method == method && r.q0 == q0 && r.b == Some(b))
                    .fold(None::<&MetricRow>, |acc, r| match acc {
                        Some(a) if a.mse <= r.mse => Some(a),
                        _ => Some(r),
                    })
                    .expect("grid is non-empty");
                best.push(LambdaChoice {
                    method,
                    q0,
                    b,
                    lambda: top.lambda.expect("sweep rows carry lambda"),
                    psnr: top.psnr,
                });
            }
        }
    }
    Ok(LambdaSweep { rows, best })
}

/// One point of the bound-versus-empirical curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurveRow {
    pub q0: f64,
    pub n: usize,
    pub theorem_bound_mse: Option<f64>,
    pub proof_bound_mse: Option<f64>,
    /// PSNR ceiling implied by the proof-convention bound; `inf` when the bound is vacuous.
    pub proof_bound_psnr: Option<f64>,
    pub genie_mse: f64,
    pub genie_psnr: f64,
    pub bdqmap_b: u32,
    pub bdqmap_lambda: f64,
    pub bdqmap_mse: f64,
    pub bdqmap_psnr: f64,
    /// `ok`, or the reason the bound could not be evaluated.
    pub status: String,
}

impl BoundCurveRow {
    pub const CSV_HEADER: &'static str =
        "q0,n,theorem_bound_mse,proof_bound_mse,proof_bound_psnr,genie_mse,genie_psnr,bdqmap_b,bdqmap_lambda,bdqmap_mse,bdqmap_psnr,status";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(self.q0),
            self.n,
            opt(self.theorem_bound_mse),
            opt(self.proof_bound_mse),
            opt(self.proof_bound_psnr),
            fmt_f64(self.genie_mse),
            fmt_f64(self.genie_psnr),
            self.bdqmap_b,
            fmt_f64(self.bdqmap_lambda),
            fmt_f64(self.bdqmap_mse),
            fmt_f64(self.bdqmap_psnr),
            self.status.replace([',', '\n'], ";"),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub rows: Vec<BoundCurveRow>,
    /// Full bound evaluations, both conventions, for every point that has them.
    pub reports: Vec<BoundReport>,
}

/// Lower bounds against the genie-aided ML and the refined quantized-MAP
/// estimator (largest configured `b`) over `cfg.bound_q0`.
pub fn run_bound_curve(cfg: &ExperimentConfig) -> Result<BoundCurve> {
    cfg.validate()?;
    let b = *cfg.bits.iter().max().expect("validated non-empty");
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &q0 in &cfg.bound_q0 {
        let mut bench = Bench::new(cfg, q0, true)?;
        let genie = bench
            .test
            .pairs
            .iter()
            .map(|p| mse(p.clean.values(), &genie_ml(&p.noisy, p.clean.jump_indices())?))
            .sum::<Result<f64>>()?
            / bench.test.pairs.len() as f64;
        let [_, refined] = bench.choose_lambdas(b)?;
        let (_, bd) = bdqmap_mses(&bench.test, &bench.tables[&b], refined.lambda)?;

        let eta2 = bench.model.second_moment();
        let theorem = corollary_bound(q0, eta2, cfg.x_max, cfg.n as u64, Convention::Theorem);
        let proof = corollary_bound(q0, eta2, cfg.x_max, cfg.n as u64, Convention::Proof);
        let status = match (&theorem, &proof) {
            (Ok(_), Ok(_)) => "ok".to_string(),
            (Err(e), _) | (_, Err(e)) => e.to_string(),
        };
        let theorem_mse = theorem.ok().map(|r| {
            let m = r.lower_bound_mse;
            reports.push(r);
            m
        });
        let proof_mse = proof.ok().map(|r| {
            let m = r.lower_bound_mse;
            reports.push(r);
            m
        });
        rows.push(BoundCurveRow {
            q0,
            n: cfg.n,
            theorem_bound_mse: theorem_mse,
            proof_bound_mse: proof_mse,
            proof_bound_psnr: proof_mse.map(|m| psnr(m.max(0.0), cfg.x_max)),
            genie_mse: genie,
            genie_psnr: psnr(genie, cfg.x_max),
            bdqmap_b: b,
            bdqmap_lambda: refined.lambda,
            bdqmap_mse: bd,
            bdqmap_psnr: psnr(bd, cfg.x_max),
            status,
        });
    }
    Ok(BoundCurve { rows, reports })
}

pub fn bound_curve_csv(curve: &BoundCurve) -> String {
    csv_text(BoundCurveRow::CSV_HEADER, curve.rows.iter().map(BoundCurveRow::csv_row))
}

pub fn bound_report_csv(reports: &[BoundReport]) -> String {
    csv_text(BoundReport::CSV_HEADER, reports.iter().map(BoundReport::csv_row))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `table1.csv`, `table1_lambda.csv` and `table1_timing.csv`.
pub fn write_table1(dir: &Path, table: &Table1) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let files = [
        ("table1.csv", metric_csv(&table.rows)),
        ("table1_lambda.csv", lambda_choice_csv(&table.lambda_choices)),
        ("table1_timing.csv", timing_csv(&table.rows)),
    ];
    write_all(dir, &files)
}

/// Writes `lambda_sweep.csv`, `lambda_best.csv` and `lambda_sweep_timing.csv`.
pub fn write_lambda_sweep(dir: &Path, sweep: &LambdaSweep) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let files = [
        ("lambda_sweep.csv", metric_csv(&sweep.rows)),
        ("lambda_best.csv", lambda_choice_csv(&sweep.best)),
        ("lambda_sweep_timing.csv", timing_csv(&sweep.rows)),
    ];
    write_all(dir, &files)
}

/// Writes `bound_curve.csv` and `bound_reports.csv`.
pub fn write_bound_curve(dir: &Path, curve: &BoundCurve) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let files = [
        ("bound_curve.csv", bound_curve_csv(curve)),
        ("bound_reports.csv", bound_report_csv(&curve.reports)),
    ];
    write_all(dir, &files)
}

fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    files
        .iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            write_text(&path, text)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::resolve(ExperimentOverrides {
            q0: Some(vec![0.05]),
            n: Some(400),
            num_signals: Some(3),
            validation_signals: Some(2),
            training_samples: Some(20_000),
            lambda_grid: Some(vec![0.0, 0.5, 4.0]),
            tv_grid: Some(vec![0.5, 5.0]),
            bound_q0: Some(vec![0.05]),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn presets() {
        let desk = ExperimentConfig::preset(Scale::Desk);
        assert_eq!((desk.n, desk.num_signals), (10_000, 20));
        let paper = ExperimentConfig::preset(Scale::Paper);
        assert_eq!((paper.n, paper.num_signals), (100_000, 100));
        assert_eq!(desk.lambda_grid.len(), 16);
        assert!((desk.lambda_grid[0] - 1e-2).abs() < 1e-15);
        assert!((desk.lambda_grid[15] - 1e2).abs() < 1e-12);
    }

    #[test]
    fn overrides_merge_and_parse() {
        let file = ExperimentOverrides::from_toml("scale = \"paper\"\nn = 500\nq0 = [0.1]\n").unwrap();
        let cli = ExperimentOverrides {
            n: Some(700),
            ..Default::default()
        };
        let cfg = ExperimentConfig::resolve(file.merge(cli)).unwrap();
        assert_eq!(cfg.scale, Scale::Paper);
        assert_eq!(cfg.n, 700);
        assert_eq!(cfg.q0, vec![0.1]);
        assert_eq!(cfg.num_signals, 100);
        assert!(ExperimentOverrides::from_toml("bogus = 1").is_err());
        assert!(ExperimentOverrides::from_toml("methods = [\"nope\"]").is_err());
        let parsed = ExperimentOverrides::from_toml("methods = [\"bdqmap_b\", \"tv\"]").unwrap();
        assert_eq!(parsed.methods, Some(vec![Method::BdqmapB, Method::Tv]));
    }

    #[test]
    fn validation_rejects() {
        for o in [
            ExperimentOverrides { n: Some(1), ..Default::default() },
            ExperimentOverrides { q0: Some(vec![0.0]), ..Default::default() },
            ExperimentOverrides { bits: Some(vec![]), ..Default::default() },
            ExperimentOverrides { lambda_grid: Some(vec![]), ..Default::default() },
            ExperimentOverrides { x_min: Some(2.0), ..Default::default() },
        ] {
            assert!(ExperimentConfig::resolve(o).is_err());
        }
    }

    #[test]
    fn analytic_speckled_psnr() {
        let (_, p) = speckled_analytic(1.0 / 3.0, 1.0);
        assert!((p - 8.704_917_693_799_754).abs() < 1e-12);
    }

    #[test]
    fn table1_small_run_is_deterministic() {
        let cfg = tiny();
        let a = run_table1(&cfg).unwrap();
        let b = run_table1(&cfg).unwrap();
        assert_eq!(metric_csv(&a.rows), metric_csv(&b.rows));
        // speckled + analytic + 7 filters + 2 methods x 2 bit depths.
        assert_eq!(a.rows.len(), 13);
        assert_eq!(a.lambda_choices.len(), 4);
        let text = metric_csv(&a.rows);
        assert!(text.starts_with("method,q0,b,lambda,mse,psnr\nspeckled,"));
        for r in &a.rows {
            assert!(r.mse > 0.0 && r.psnr.is_finite());
        }
        assert!(a.get(Method::Bdqmap, 0.05, Some(3)).is_some());
    }

    #[test]
    fn sweep_matches_table_choice() {
        let cfg = tiny();
        let sweep = run_lambda_sweep(&cfg).unwrap();
        assert_eq!(sweep.rows.len(), 3 * 2 * 2);
        let table = run_table1(&cfg).unwrap();
        for c in &table.lambda_choices {
            let s = sweep
                .best
                .iter()
                .find(|s| s.method == c.method && s.b == c.b && s.q0 == c.q0)
                .unwrap();
            assert_eq!(s.lambda, c.lambda);
        }
    }

    #[test]
    fn fixed_lambda_skips_search() {
        let mut cfg = tiny();
        cfg.lambda = Some(0.5);
        cfg.methods = vec![Method::Bdqmap];
        let t = run_table1(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.lambda == Some(0.5)));
    }

    #[test]
    fn bound_curve_flags_preconditions() {
        let mut cfg = tiny();
        cfg.bound_q0 = vec![0.05, 0.001];
        let curve = run_bound_curve(&cfg).unwrap();
        assert_eq!(curve.rows.len(), 2);
        assert_eq!(curve.rows[0].status, "ok");
        // n q0 = 0.4 < 1: flagged, still reported.
        assert_ne!(curve.rows[1].status, "ok");
        assert!(curve.rows[1].proof_bound_mse.is_none());
        assert_eq!(curve.reports.len(), 2);
        let text = bound_curve_csv(&curve);
        assert_eq!(text.lines().count(), 3);
    }
}
