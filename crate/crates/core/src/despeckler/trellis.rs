use super::{detect_jumps, fidelity_unchecked, segment_ml};
use crate::weights::WeightTable;
use crate::{Error, Result};

/// Parameters of one quantized-MAP run.
#[derive(Debug, Clone, Copy)]
pub struct DespecklerConfig<'w> {
    pub lambda: f64,
    pub b: u32,
    pub k: usize,
    weights: &'w WeightTable,
}

impl<'w> DespecklerConfig<'w> {
    /// Bit depth and memory order are taken from the weight table.
    pub fn new(lambda: f64, weights: &'w WeightTable) -> Result<Self> {
        Self::with_params(lambda, weights.bits(), weights.order(), weights)
    }

    pub fn with_params(lambda: f64, b: u32, k: usize, weights: &'w WeightTable) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if weights.bits() != b || weights.order() != k {
            return Err(Error::invalid(format!(
                "weight table has (k = {}, b = {}) but the despeckler asks for (k = {k}, b = {b})",
                weights.order(),
                weights.bits()
            )));
        }
        Ok(Self {
            lambda,
            b,
            k,
            weights,
        })
    }

    pub fn weights(&self) -> &'w WeightTable {
        self.weights
    }

    /// `(lambda / b) * w` for every pattern, in dense trellis-state order.
    fn scaled_weights(&self) -> Vec<f64> {
        let scale = self.lambda / self.b as f64;
        self.weights.dense().into_iter().map(|w| scale * w).collect()
    }
}

/// Output of the trellis search.
#[derive(Debug, Clone, PartialEq)]
pub struct TrellisSolution {
    /// Alphabet index of every sample.
    pub indices: Vec<usize>,
    /// Quantization level (cell lower edge) of every sample.
    pub levels: Vec<f64>,
    /// Cell-midpoint amplitude of every sample; the despeckled estimate.
    pub amplitudes: Vec<f64>,
    /// Minimum of the normalized cost.
    pub total_cost: f64,
    pub jumps: Vec<usize>,
}

/// Exact minimizer over `b`-bit sequences of
///
/// `(1/n) [ sum_i (ln r(u_i)^2 + y_i^2 / r(u_i)^2) + (lambda/b) sum_{i>=k} w(u_{i-k+1..i}) ]`
///
/// where `r` maps a level to its cell midpoint. The fidelity of the first
/// `k - 1` samples is folded into the initial state costs.
///
/// A state is the pattern of the last `k` levels. Its predecessors differ only
/// in the oldest symbol, so the minimum over predecessors depends on the
/// `k - 1` shared symbols and not on the incoming one; each stage therefore
/// costs `O(|A|^k)` instead of `O(|A|^(k+1))`. Ties go to the lowest index.
pub fn bdqmap_b_viterbi(y: &[f64], cfg: &DespecklerConfig<'_>) -> Result<TrellisSolution> {
    let k = cfg.k;
    let n = y.len();
    if n < k {
        return Err(Error::invalid(format!(
            "sequence of length {n} is shorter than the memory order {k}"
        )));
    }
    let quantizer = cfg.weights.quantizer();
    let a = quantizer.len();
    let reps = quantizer.representatives();
    let log_r2: Vec<f64> = reps.iter().map(|r| (r * r).ln()).collect();
    let inv_r2: Vec<f64> = reps.iter().map(|r| 1.0 / (r * r)).collect();
    let fid = |y: f64, out: &mut [f64]| {
        let y2 = y * y;
        for ((o, &l), &i) in out.iter_mut().zip(&log_r2).zip(&inv_r2) {
            *o = l + y2 * i;
        }
    };

    let states = a.pow(k as u32);
    let prefixes = states / a;
    let weights = cfg.scaled_weights();

    // Initial costs over the first k samples.
    let mut f = vec![0.0; a];
    let mut cost = weights.clone();
    let mut stride = states;
    for &yi in &y[..k] {
        fid(yi, &mut f);
        stride /= a;
        for (s, c) in cost.iter_mut().enumerate() {
            *c += f[(s / stride) % a];
        }
    }

    // back[(i - k) * prefixes + prefix] = oldest symbol of the best predecessor.
    let mut back: Vec<u16> = vec![0; (n - k) * prefixes];
    let mut best_prefix = vec![0.0; prefixes];
    let mut next = vec![0.0; states];
    for (step, &yi) in y[k..].iter().enumerate() {
        let row = &mut back[step * prefixes..(step + 1) * prefixes];
        for (p, (bp, arg)) in best_prefix.iter_mut().zip(row.iter_mut()).enumerate() {
            let mut best = cost[p];
            let mut best_c = 0;
            for c in 1..a {
                let v = cost[c * prefixes + p];
                if v < best {
                    best = v;
                    best_c = c;
                }
            }
            *bp = best;
            *arg = best_c as u16;
        }
        fid(yi, &mut f);
        for (s, nx) in next.iter_mut().enumerate() {
            *nx = best_prefix[s / a] + f[s % a] + weights[s];
        }
        std::mem::swap(&mut cost, &mut next);
    }

    let (mut state, best) = cost
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bs, bv), (s, &v)| if v < bv { (s, v) } else { (bs, bv) });

    let mut indices = vec![0usize; n];
    for i in (k..n).rev() {
        indices[i] = state % a;
        let prefix = state / a;
        let c = back[(i - k) * prefixes + prefix] as usize;
        state = c * prefixes + prefix;
    }
    // `state` now covers samples 0..k.
    let mut s = state;
    for i in (0..k).rev() {
        indices[i] = s % a;
        s /= a;
    }

    let alphabet = quantizer.alphabet();
    let levels: Vec<f64> = indices.iter().map(|&i| alphabet[i]).collect();
    let amplitudes = indices.iter().map(|&i| reps[i]).collect();
    let jumps = detect_jumps(&indices);
    Ok(TrellisSolution {
        indices,
        levels,
        amplitudes,
        total_cost: best / n as f64,
        jumps,
    })
}

/// Evaluate the trellis objective on a given index sequence.
pub fn quantized_objective(y: &[f64], indices: &[usize], cfg: &DespecklerConfig<'_>) -> Result<f64> {
    let k = cfg.k;
    let n = y.len();
    if indices.len() != n || n < k {
        return Err(Error::invalid("index sequence must match y and be at least k long"));
    }
    let quantizer = cfg.weights.quantizer();
    let a = quantizer.len();
    if indices.iter().any(|&i| i >= a) {
        return Err(Error::invalid("index outside the alphabet"));
    }
    let reps = quantizer.representatives();
    let fidelity: f64 = y
        .iter()
        .zip(indices)
        .map(|(&yi, &i)| fidelity_unchecked(reps[i], yi))
        .sum();
    let scale = cfg.lambda / cfg.b as f64;
    let prior: f64 = indices.windows(k).map(|w| cfg.weights.weight(w)).sum();
    Ok((fidelity + scale * prior) / n as f64)
}

/// Replace the trellis amplitudes by per-segment RMS of `y` on the detected segments.
pub fn refine(y: &[f64], solution: &TrellisSolution) -> Result<Vec<f64>> {
    segment_ml(y, &solution.jumps)
}

/// Trellis search, jump detection, then segment-wise ML amplitudes.
pub fn bdqmap_refined(y: &[f64], cfg: &DespecklerConfig<'_>) -> Result<Vec<f64>> {
    let solution = bdqmap_b_viterbi(y, cfg)?;
    refine(y, &solution)
}
