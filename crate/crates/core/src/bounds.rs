//! MSE lower bound for the piecewise-constant Markov source.
//!
//! The bound compares any jump-count-aware estimator with the genie-aided ML
//! estimator. Its main term is `2 q0 eta2 (q0 c1 + q0^2 c2 + E[f(T) 1{T>=3}])`
//! with `T ~ Geometric(q0)`, from which a concentration slack `upsilon_n` is
//! subtracted. Two sets of constants are available (see [`Convention`]).
//!
//! The bound assumes `x_min > 0`; the experiments use `[0, 1)`. Nothing here
//! depends on `x_min`, so the evaluator accepts either and leaves the
//! interpretation to the caller.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

/// `sup_{T >= 3} T |f(T) - 1/4|`, attained at `T = 3` (about 0.664).
pub const F_GAP_BOUND: f64 = 0.7;

/// Normalized per-segment genie error
/// `f(T) = T (1 - e^{-1/2} (1 - 1/T)^{T/2} / (1 - 2/T)^{(T-1)/2})`.
pub fn f_t(t: u64) -> Result<f64> {
    if t < 3 {
        return Err(Error::invalid(format!("f(T) needs T >= 3, got {t}")));
    }
    Ok(f_t_unchecked(t as f64))
}

fn f_t_unchecked(t: f64) -> f64 {
    let exponent = -0.5 + 0.5 * t * (-1.0 / t).ln_1p() - 0.5 * (t - 1.0) * (-2.0 / t).ln_1p();
    -t * exponent.exp_m1()
}

/// `E[f(T) 1{T >= 3}]` for `T ~ Geometric(q0)` on `{1, 2, ...}`.
///
/// The series is summed up to the first `T_max` at which the remaining error
/// is below `tol`; the tail beyond is replaced by its `1/4` asymptote
/// `(1 - q0)^T_max / 4`. Because `f` increases to `1/4` with
/// `T |f(T) - 1/4| <= F_GAP_BOUND`, the error of that estimate is at most
/// `F_GAP_BOUND / T_max * (1 - q0)^T_max`.
pub fn expected_f_t(q0: f64, tol: f64) -> Result<f64> {
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(Error::invalid(format!("q0 must lie in (0, 1), got {q0}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("series tolerance must be positive"));
    }
    let keep = 1.0 - q0;
    // P(T = 3)
    let mut mass = q0 * keep * keep;
    // (1 - q0)^T after adding term T.
    let mut survival = keep * keep * keep;
    let mut sum = 0.0;
    let mut t = 3.0;
    loop {
        sum += f_t_unchecked(t) * mass;
        if F_GAP_BOUND / t * survival < tol {
            return Ok(sum + 0.25 * survival);
        }
        mass *= keep;
        survival *= keep;
        t += 1.0;
    }
}

/// Per-sample MSE of the segment RMS estimate on a constant segment of unit
/// amplitude and length `T`: `2 (1 - sqrt(2/T) Gamma((T+1)/2) / Gamma(T/2))`.
pub fn genie_segment_mse(t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    let t = t as f64;
    let ratio = (ln_gamma(0.5 * (t + 1.0)) - ln_gamma(0.5 * t)).exp();
    Ok(2.0 * (1.0 - (2.0 / t).sqrt() * ratio))
}

/// Tail bound for the mean of `N` i.i.d. `Geometric(q0)` variables:
/// `P(|mean - 1/q0| > t) <= 2 exp(-N (q0 t - ln(1 + q0 t)))`.
pub fn geometric_tail(samples: u64, q0: f64, t: f64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid(format!("deviation must be positive, got {t}")));
    }
    if !(q0 > 0.0 && q0 <= 1.0) {
        return Err(Error::invalid(format!("q0 must lie in (0, 1], got {q0}")));
    }
    Ok(2.0 * (-(samples as f64) * rate(q0 * t)).exp())
}

/// `x - ln(1 + x)`.
fn rate(x: f64) -> f64 {
    x - x.ln_1p()
}

/// Concentration slack of the bound and its two deviation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Upsilon {
    pub upsilon: f64,
    pub t1: f64,
    pub t2: f64,
}

/// `upsilon_n = 2 x_max^2 (eps/(1-eps) + n q0 e^{-F1 r(q0 t1)} + n q0 e^{-F2 r(q0 t2)})`
/// with `F1 = floor(n q0 (1+eps))`, `F2 = floor(n q0 (1-eps))`,
/// `t1 = 1/q0 - n/F1`, `t2 = n/F2 - 1/q0` and `r(x) = x - ln(1+x)`.
pub fn upsilon(q0: f64, x_max: f64, n: u64, epsilon: f64) -> Result<Upsilon> {
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(Error::invalid(format!("q0 must lie in (0, 1), got {q0}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let nq = n as f64 * q0;
    let f1 = (nq * (1.0 + epsilon)).floor();
    let f2 = (nq * (1.0 - epsilon)).floor();
    if f2 < 1.0 {
        return Err(Error::precondition(format!(
            "floor(n q0 (1 - eps)) = {f2} < 1 for n = {n}, q0 = {q0}, eps = {epsilon}"
        )));
    }
    let t1 = 1.0 / q0 - n as f64 / f1;
    let t2 = n as f64 / f2 - 1.0 / q0;
    if t1 < 0.0 {
        return Err(Error::precondition(format!(
            "t1 = {t1} < 0: n q0 eps is too small for floor(n q0 (1 + eps)) to exceed n q0"
        )));
    }
    let upper = nq * (-f1 * rate(q0 * t1)).exp();
    let lower = nq * (-f2 * rate(q0 * t2)).exp();
    Ok(Upsilon {
        upsilon: 2.0 * x_max * x_max * (epsilon / (1.0 - epsilon) + upper + lower),
        t1,
        t2,
    })
}

/// Which constants the main term of the bound uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `c1 = 3 - sqrt(2/pi) - 2 sqrt(pi)`, `c2 = sqrt(pi) - 2`, as stated with the theorem.
    Theorem,
    /// Main term `2 q0 eta2 (q0 (1 - sqrt(2/pi)) + q0 (1 - q0)(2 - sqrt(pi)) + E f)`,
    /// as obtained step by step in the derivation; equivalently
    /// `c1 = 3 - sqrt(2/pi) - sqrt(pi)`, `c2 = sqrt(pi) - 2`.
    #[default]
    Proof,
}

impl Convention {
    pub fn constants(self) -> (f64, f64) {
        let s2pi = (2.0 / PI).sqrt();
        let spi = PI.sqrt();
        match self {
            Convention::Theorem => (3.0 - s2pi - 2.0 * spi, spi - 2.0),
            Convention::Proof => (3.0 - s2pi - spi, spi - 2.0),
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::Theorem => "theorem",
            Convention::Proof => "proof",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem" => Ok(Convention::Theorem),
            "proof" => Ok(Convention::Proof),
            other => Err(Error::invalid(format!(
                "unknown convention {other:?} (expected theorem or proof)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub q0: f64,
    /// `E[X^2]` of the source.
    pub eta2: f64,
    pub x_max: f64,
    pub n: u64,
    pub epsilon: f64,
    pub convention: Convention,
    pub series_tol: f64,
}

impl BoundParams {
    /// Parameters with the vanishing deviation `eps = (n q0)^{-1/4}`.
    pub fn corollary(q0: f64, eta2: f64, x_max: f64, n: u64, convention: Convention) -> Result<Self> {
        let nq = n as f64 * q0;
        if !(nq > 1.0) {
            return Err(Error::precondition(format!(
                "n q0 = {nq} must exceed 1 for eps = (n q0)^(-1/4) < 1"
            )));
        }
        Ok(Self {
            q0,
            eta2,
            x_max,
            n,
            epsilon: nq.powf(-0.25),
            convention,
            series_tol: 1e-12,
        })
    }
}

/// Every intermediate of one bound evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub q0: f64,
    pub eta2: f64,
    pub x_max: f64,
    pub n: u64,
    pub epsilon: f64,
    pub convention: Convention,
    pub c1: f64,
    pub c2: f64,
    pub expected_ft: f64,
    pub main_term: f64,
    pub upsilon: f64,
    pub t1: f64,
    pub t2: f64,
    pub lower_bound_mse: f64,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "q0,eta2,x_max,n,epsilon,convention,c1,c2,expected_ft,main_term,upsilon,t1,t2,lower_bound_mse";

    pub fn csv_row(&self) -> String {
        use crate::io::fmt_f64 as f;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            f(self.q0),
            f(self.eta2),
            f(self.x_max),
            self.n,
            f(self.epsilon),
            self.convention,
            f(self.c1),
            f(self.c2),
            f(self.expected_ft),
            f(self.main_term),
            f(self.upsilon),
            f(self.t1),
            f(self.t2),
            f(self.lower_bound_mse),
        )
    }
}

pub fn mse_lower_bound(params: &BoundParams) -> Result<BoundReport> {
    let BoundParams {
        q0,
        eta2,
        x_max,
        n,
        epsilon,
        convention,
        series_tol,
    } = *params;
    if !(eta2 >= 0.0 && x_max >= 0.0) {
        return Err(Error::invalid("eta2 and x_max must be non-negative"));
    }
    let slack = upsilon(q0, x_max, n, epsilon)?;
    let ef = expected_f_t(q0, series_tol)?;
    let (c1, c2) = convention.constants();
    let inner = match convention {
        Convention::Theorem => q0 * c1 + q0 * q0 * c2 + ef,
        Convention::Proof => {
            q0 * (1.0 - (2.0 / PI).sqrt()) + q0 * (1.0 - q0) * (2.0 - PI.sqrt()) + ef
        }
    };
    let main_term = 2.0 * q0 * eta2 * inner;
    Ok(BoundReport {
        q0,
        eta2,
        x_max,
        n,
        epsilon,
        convention,
        c1,
        c2,
        expected_ft: ef,
        main_term,
        upsilon: slack.upsilon,
        t1: slack.t1,
        t2: slack.t2,
        lower_bound_mse: main_term - slack.upsilon,
    })
}

/// The bound with `eps = (n q0)^{-1/4}`.
pub fn corollary_bound(
    q0: f64,
    eta2: f64,
    x_max: f64,
    n: u64,
    convention: Convention,
) -> Result<BoundReport> {
    mse_lower_bound(&BoundParams::corollary(q0, eta2, x_max, n, convention)?)
}
