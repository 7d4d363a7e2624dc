//! Bayesian despeckling of one-dimensional structured sources.
//!
//! The crate covers the whole pipeline for signals observed through the
//! multiplicative channel `Y = X * W` with `W ~ N(0, 1)`:
//!
//! - [`sources`]: seeded piecewise-constant Markov and spike-slab sources and
//!   the speckle channel.
//! - [`quantization`]: dyadic `b`-bit quantizer and k-th order empirical
//!   distributions.
//! - [`weights`]: the `-ln P(pattern)` weight table that acts as the learned prior.
//! - [`despeckler`]: the quantized-MAP trellis search, segment refinement,
//!   exact segmentation dynamic programs, the genie-aided ML reference and the
//!   memoryless closed form.
//! - [`bounds`]: the MSE lower bound for the piecewise-constant source.
//! - [`baselines`]: boxcar, Lee, Kuan, Frost, enhanced wrappers and log-TV.
//! - [`metrics`] and [`experiment`]: PSNR/MSE and the benchmark harness.

pub mod baselines;
pub mod bounds;
pub mod despeckler;
mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod quantization;
pub mod rng;
pub mod sources;
pub mod weights;

pub use baselines::{EnhancedBase, FilterConfig};
pub use bounds::{BoundParams, BoundReport, Convention};
pub use despeckler::{DespecklerConfig, Partition, TrellisSolution};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, MetricRow, Scale};
pub use quantization::{DistMap, Quantizer};
pub use sources::{PiecewiseSignal, SourceKind, SourceModel, SpeckledPair};
pub use weights::{Provenance, WeightTable};
