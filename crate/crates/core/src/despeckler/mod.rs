//! Despeckling estimators for piecewise-constant and spike-slab sources.
//!
//! - [`bdqmap_b_viterbi`]: exact minimizer of the quantized-MAP cost over
//!   `b`-bit sequences, by a trellis search over k-patterns.
//! - [`bdqmap_refined`]: the trellis jump set followed by per-segment
//!   root-mean-square amplitudes.
//! - [`optimal_partition`] and [`partition_k_jumps`]: exact continuous-amplitude
//!   segmentation programs.
//! - [`genie_ml`]: the maximum-likelihood reference given the true jumps.
//! - [`memoryless_despeckle`]: symbol-by-symbol closed form for the spike-slab source.

mod memoryless;
mod segmentation;
mod trellis;

pub use memoryless::{interval_lambda, memoryless_despeckle, memoryless_penalty};
pub use segmentation::{
    genie_ml, markov_penalty, optimal_partition, partition_k_jumps, segment_ml,
    segmentation_cost, Partition, PenaltyForm,
};
pub use trellis::{
    bdqmap_b_viterbi, bdqmap_refined, quantized_objective, refine, DespecklerConfig,
    TrellisSolution,
};

use crate::{Error, Result};

/// Negative log-likelihood of one observation, up to constants:
/// `ln u^2 + y^2 / u^2`.
pub fn fidelity_cost(u: f64, y: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::invalid(format!("amplitude must be positive, got {u}")));
    }
    Ok(fidelity_unchecked(u, y))
}

#[inline]
pub(crate) fn fidelity_unchecked(u: f64, y: f64) -> f64 {
    let u2 = u * u;
    u2.ln() + y * y / u2
}

/// Positions `j` with `levels[j] != levels[j - 1]`, i.e. the first sample of
/// every segment after the first.
pub fn detect_jumps<T: PartialEq>(levels: &[T]) -> Vec<usize> {
    (1..levels.len())
        .filter(|&i| levels[i] != levels[i - 1])
        .collect()
}
