//! Continuous-amplitude segmentation under the speckle likelihood.
//!
//! With segment amplitudes profiled out at their ML value (the segment RMS),
//! a segment of length `m` and energy `S` costs `m ln(S / m)` up to the
//! constant `m`. The programs below minimize the sum of segment costs plus a
//! jump penalty, or with a fixed jump count.

use crate::weights::regularizer_offset;
use crate::{Error, Result};

/// Floor applied to a segment's mean energy inside the log. Only an all-zero
/// segment reaches it.
const ENERGY_FLOOR: f64 = f64::MIN_POSITIVE;

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub amplitudes: Vec<f64>,
    /// First sample of every segment after the first.
    pub jumps: Vec<usize>,
    /// `sum_j m_j ln(mean energy_j) + penalty * jumps`.
    pub cost: f64,
}

/// Prefix sums of `y^2` with `O(1)` segment costs.
struct EnergyPrefix(Vec<f64>);

impl EnergyPrefix {
    fn new(y: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut sums = Vec::with_capacity(y.len() + 1);
        sums.push(0.0);
        for v in y {
            acc += v * v;
            sums.push(acc);
        }
        Self(sums)
    }

    /// Cost of the segment `[start, end)`.
    #[inline]
    fn cost(&self, start: usize, end: usize) -> f64 {
        let m = (end - start) as f64;
        let mean = ((self.0[end] - self.0[start]) / m).max(ENERGY_FLOOR);
        m * mean.ln()
    }
}

/// Segmentation cost of a given jump set, without any penalty.
pub fn segmentation_cost(y: &[f64], jumps: &[usize]) -> Result<f64> {
    validate_jumps(y.len(), jumps)?;
    let prefix = EnergyPrefix::new(y);
    Ok(bounds(y.len(), jumps).map(|(s, e)| prefix.cost(s, e)).sum())
}

fn validate_jumps(n: usize, jumps: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("empty signal"));
    }
    let mut prev = 0;
    for &j in jumps {
        if j <= prev || j >= n {
            return Err(Error::invalid(format!(
                "jump {j} leaves an empty segment or falls outside 1..{n}"
            )));
        }
        prev = j;
    }
    Ok(())
}

fn bounds(n: usize, jumps: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    let starts = std::iter::once(0).chain(jumps.iter().copied());
    let ends = jumps.iter().copied().chain(std::iter::once(n));
    starts.zip(ends)
}

/// Every sample of a segment takes the root-mean-square of `y` over that segment.
pub fn segment_ml(y: &[f64], jumps: &[usize]) -> Result<Vec<f64>> {
    validate_jumps(y.len(), jumps)?;
    let mut out = Vec::with_capacity(y.len());
    for (s, e) in bounds(y.len(), jumps) {
        let seg = &y[s..e];
        let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64).sqrt();
        out.extend(std::iter::repeat_n(rms, seg.len()));
    }
    Ok(out)
}

/// Maximum-likelihood estimate given the true jump positions.
pub fn genie_ml(y: &[f64], true_jumps: &[usize]) -> Result<Vec<f64>> {
    segment_ml(y, true_jumps)
}

/// Exact minimizer over all segmentations of
/// `sum_j m_j ln(mean y^2 on segment j) + penalty * (#segments - 1)`.
///
/// Optimal partitioning with PELT pruning: splitting a segment never raises
/// the profiled likelihood cost, so a start `s` whose cost up to `t` already
/// exceeds `F(t) + penalty` can never be optimal again. Worst case `O(n^2)`.
pub fn optimal_partition(y: &[f64], penalty: f64) -> Result<Partition> {
    let n = y.len();
    if n == 0 {
        return Err(Error::invalid("empty signal"));
    }
    if penalty.is_nan() || penalty < 0.0 {
        return Err(Error::invalid(format!("penalty must be >= 0, got {penalty}")));
    }
    let prefix = EnergyPrefix::new(y);
    let mut best = vec![0.0; n + 1];
    let mut last = vec![0usize; n + 1];
    let mut candidates = vec![0usize];
    for end in 1..=n {
        let mut f_end = f64::INFINITY;
        let mut arg = 0;
        for &s in &candidates {
            let jump_cost = if s == 0 { 0.0 } else { penalty };
            let v = best[s] + prefix.cost(s, end) + jump_cost;
            if v < f_end {
                f_end = v;
                arg = s;
            }
        }
        best[end] = f_end;
        last[end] = arg;
        let slack = 1e-12 * (1.0 + f_end.abs());
        candidates.retain(|&s| {
            let jump_cost = if s == 0 { 0.0 } else { penalty };
            best[s] + prefix.cost(s, end) + jump_cost <= f_end + penalty + slack
        });
        candidates.push(end);
    }
    let jumps = backtrack(&last, n);
    Ok(Partition {
        amplitudes: segment_ml(y, &jumps)?,
        cost: best[n],
        jumps,
    })
}

fn backtrack(last: &[usize], n: usize) -> Vec<usize> {
    let mut jumps = Vec::new();
    let mut e = n;
    while last[e] > 0 {
        jumps.push(last[e]);
        e = last[e];
    }
    jumps.reverse();
    jumps
}

/// Exact minimizer of the segmentation cost with exactly `jumps` jumps,
/// by dynamic programming over (segments used, end position). `O(jumps n^2)`.
pub fn partition_k_jumps(y: &[f64], jumps: usize) -> Result<Partition> {
    let n = y.len();
    if n == 0 {
        return Err(Error::invalid("empty signal"));
    }
    if jumps > n - 1 {
        return Err(Error::invalid(format!(
            "{jumps} jumps do not fit in a signal of length {n}"
        )));
    }
    let prefix = EnergyPrefix::new(y);
    // row[e]: best cost of splitting y[..e] into the current number of segments.
    let mut row: Vec<f64> = (0..=n)
        .map(|e| if e == 0 { f64::INFINITY } else { prefix.cost(0, e) })
        .collect();
    let mut parents: Vec<Vec<usize>> = Vec::with_capacity(jumps);
    for seg in 1..=jumps {
        let mut next = vec![f64::INFINITY; n + 1];
        let mut parent = vec![0usize; n + 1];
        // With seg + 1 segments the end is at least seg + 1.
        for e in (seg + 1)..=n {
            for s in seg..e {
                let v = row[s] + prefix.cost(s, e);
                if v < next[e] {
                    next[e] = v;
                    parent[e] = s;
                }
            }
        }
        row = next;
        parents.push(parent);
    }
    let mut cuts = Vec::with_capacity(jumps);
    let mut e = n;
    for parent in parents.iter().rev() {
        e = parent[e];
        cuts.push(e);
    }
    cuts.reverse();
    Ok(Partition {
        amplitudes: segment_ml(y, &cuts)?,
        cost: row[n],
        jumps: cuts,
    })
}

/// How the per-jump penalty of the Markov-source cost is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyForm {
    /// `lambda + offset / b`, where `offset = -lambda ln q0 - ln(1 - q0 + q0 2^-b)`.
    Regularized,
    /// `lambda + 1 / b`.
    Simplified,
}

/// Penalty for [`optimal_partition`] that reproduces the piecewise-constant
/// Markov form of the quantized-MAP cost on a signal of length `n`:
/// `n / (n - 1) * (lambda + c / b)`.
pub fn markov_penalty(lambda: f64, q0: f64, b: u32, n: usize, form: PenaltyForm) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("the jump penalty needs n >= 2"));
    }
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(Error::invalid(format!("q0 must lie in (0, 1), got {q0}")));
    }
    let c = match form {
        PenaltyForm::Regularized => regularizer_offset(lambda, q0, b),
        PenaltyForm::Simplified => 1.0,
    };
    Ok(n as f64 / (n - 1) as f64 * (lambda + c / b as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::sources::{PiecewiseSignal, SourceModel, SpeckledPair};
    use proptest::prelude::*;
    use rand::RngExt;

    fn random_y(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    /// Cost of every subset of the n-1 cut positions.
    fn enumerate(y: &[f64], penalty: f64, fixed_jumps: Option<usize>) -> (f64, Vec<usize>) {
        let n = y.len();
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 0u32..(1 << (n - 1)) {
            let jumps: Vec<usize> = (1..n).filter(|j| mask & (1 << (j - 1)) != 0).collect();
            if fixed_jumps.is_some_and(|k| k != jumps.len()) {
                continue;
            }
            // Independent evaluation straight from the definition.
            let mut cost = penalty * jumps.len() as f64;
            let mut start = 0;
            for &e in jumps.iter().chain(std::iter::once(&n)) {
                let m = (e - start) as f64;
                let energy: f64 = y[start..e].iter().map(|v| v * v).sum();
                cost += m * (energy / m).ln();
                start = e;
            }
            if cost < best.0 {
                best = (cost, jumps);
            }
        }
        best
    }

    #[test]
    fn segment_ml_examples() {
        let out = segment_ml(&[1.0, 2.0, 2.0], &[]).unwrap();
        assert!(out.iter().all(|&v| (v - 3f64.sqrt()).abs() < 1e-15));
        assert_eq!(segment_ml(&[0.0, 0.0], &[]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(segment_ml(&[1.0, -1.0, 3.0, 3.0], &[2]).unwrap(), vec![1.0, 1.0, 3.0, 3.0]);
        assert!(segment_ml(&[1.0, 2.0], &[0]).is_err());
        assert!(segment_ml(&[1.0, 2.0], &[2]).is_err());
        assert!(segment_ml(&[1.0, 2.0, 3.0], &[1, 1]).is_err());
    }

    #[test]
    fn optimal_partition_extremes() {
        let y = random_y(50, 1);
        let p = optimal_partition(&y, f64::INFINITY).unwrap();
        assert!(p.jumps.is_empty());
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / 50.0).sqrt();
        assert!(p.amplitudes.iter().all(|&v| (v - rms).abs() < 1e-12));

        let p = optimal_partition(&y, 0.0).unwrap();
        assert_eq!(p.jumps.len(), 49);
        for (a, v) in p.amplitudes.iter().zip(&y) {
            assert!((a - v.abs()).abs() < 1e-12);
        }
        assert!(optimal_partition(&y, -1.0).is_err());
        assert!(optimal_partition(&[], 1.0).is_err());
    }

    #[test]
    fn optimal_partition_matches_enumeration() {
        for seed in 0..40 {
            let y = random_y(10, 100 + seed);
            for penalty in [0.5, 2.0, 6.0] {
                let p = optimal_partition(&y, penalty).unwrap();
                let (cost, _) = enumerate(&y, penalty, None);
                assert!((p.cost - cost).abs() < 1e-9 * cost.abs().max(1.0), "seed {seed}");
                let recomputed = segmentation_cost(&y, &p.jumps).unwrap() + penalty * p.jumps.len() as f64;
                assert!((recomputed - p.cost).abs() < 1e-9 * cost.abs().max(1.0));
            }
        }
    }

    #[test]
    fn k_jumps_matches_enumeration() {
        for seed in 0..20 {
            let y = random_y(12, 500 + seed);
            let p = partition_k_jumps(&y, 2).unwrap();
            let (cost, jumps) = enumerate(&y, 0.0, Some(2));
            assert!((p.cost - cost).abs() < 1e-9 * cost.abs().max(1.0));
            assert_eq!(p.jumps.len(), 2);
            assert_eq!(p.jumps, jumps);
        }
    }

    #[test]
    fn k_jumps_extremes() {
        let y = random_y(9, 3);
        let p = partition_k_jumps(&y, 0).unwrap();
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / 9.0).sqrt();
        assert!(p.amplitudes.iter().all(|&v| (v - rms).abs() < 1e-12));
        let p = partition_k_jumps(&y, 8).unwrap();
        assert_eq!(p.jumps, (1..9).collect::<Vec<_>>());
        for (a, v) in p.amplitudes.iter().zip(&y) {
            assert!((a - v.abs()).abs() < 1e-12);
        }
        assert!(partition_k_jumps(&y, 9).is_err());
    }

    #[test]
    fn jump_count_monotone_in_penalty() {
        let model = SourceModel::markov(0.02, 0.0, 1.0).unwrap();
        let pair = SpeckledPair::generate(&model, 3000, 12).unwrap();
        let mut prev = usize::MAX;
        for i in 0..40 {
            let penalty = 0.05 * 1.25f64.powi(i);
            let k = optimal_partition(&pair.noisy, penalty).unwrap().jumps.len();
            assert!(k <= prev, "penalty {penalty}: {k} > {prev}");
            prev = k;
        }
    }

    #[test]
    fn pruning_does_not_change_the_optimum() {
        // Compare pruned DP against the full quadratic DP on a longer signal.
        let model = SourceModel::markov(0.05, 0.0, 1.0).unwrap();
        let pair = SpeckledPair::generate(&model, 600, 4).unwrap();
        let y = &pair.noisy;
        let penalty = 8.0;
        let prefix = EnergyPrefix::new(y);
        let n = y.len();
        let mut best = vec![0.0; n + 1];
        for e in 1..=n {
            best[e] = (0..e)
                .map(|s| best[s] + prefix.cost(s, e) + if s == 0 { 0.0 } else { penalty })
                .fold(f64::INFINITY, f64::min);
        }
        let p = optimal_partition(y, penalty).unwrap();
        assert!((p.cost - best[n]).abs() < 1e-9 * best[n].abs());
    }

    #[test]
    fn genie_recovers_noiseless_signal() {
        let x = PiecewiseSignal::from_values(vec![0.2, 0.2, 0.7, 0.7, 0.7, 0.1]).unwrap();
        let est = genie_ml(x.values(), x.jump_indices()).unwrap();
        for (a, b) in est.iter().zip(x.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(genie_ml(x.values(), &[6]).is_err());
    }

    #[test]
    fn penalty_forms() {
        let reg = markov_penalty(1.0, 0.01, 2, 101, PenaltyForm::Regularized).unwrap();
        let offset = -(0.01f64).ln() - (1.0 - 0.01 + 0.0025f64).ln();
        assert!((reg - 1.01 * (1.0 + offset / 2.0)).abs() < 1e-12);
        let simple = markov_penalty(1.0, 0.01, 2, 101, PenaltyForm::Simplified).unwrap();
        assert!((simple - 1.01 * 1.5).abs() < 1e-12);
        assert!(markov_penalty(1.0, 0.01, 2, 1, PenaltyForm::Simplified).is_err());
    }

    proptest! {
        #[test]
        fn segment_rms_minimizes_amplitude_cost(
            y in prop::collection::vec(-3.0f64..3.0, 4..40),
            cut_frac in 0.1f64..0.9,
            scale in prop::sample::select(vec![0.5, 0.9, 0.99, 1.01, 1.1, 2.0]),
        ) {
            let n = y.len();
            let cut = ((n as f64 * cut_frac) as usize).clamp(1, n - 1);
            let jumps = [cut];
            let ml = segment_ml(&y, &jumps).unwrap();
            let cost = |amps: &[f64]| -> f64 {
                amps.iter().zip(&y).map(|(a, v)| (a * a).ln() + v * v / (a * a)).sum()
            };
            prop_assume!(ml.iter().all(|&a| a > 0.0));
            let base = cost(&ml);
            // Perturb one segment's amplitude at a time.
            for seg in 0..2 {
                let perturbed: Vec<f64> = ml.iter().enumerate()
                    .map(|(i, &a)| if (i < cut) == (seg == 0) { a * scale } else { a })
                    .collect();
                prop_assert!(cost(&perturbed) >= base - 1e-9);
            }
        }
    }
}
