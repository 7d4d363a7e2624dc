//! Error metrics.

use crate::{Error, Result};

/// Mean squared error between `x` and `xhat`.
pub fn mse(x: &[f64], xhat: &[f64]) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            x.len(),
            xhat.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::invalid("empty signal"));
    }
    let sum: f64 = x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x.len() as f64)
}

/// `10 log10(max_val^2 / mse)`; `+inf` when `mse == 0`.
pub fn psnr(mse: f64, max_val: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_val * max_val / mse).log10()
    }
}
