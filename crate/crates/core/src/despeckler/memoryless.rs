use crate::weights::memoryless_gamma;
use crate::{Error, Result};

/// Roots `r_lo <= 1 <= r_hi` of `r^2 - ln r^2 = 1 + lambda`.
///
/// Inside `[r_lo, r_hi]` the spike amplitude is cheaper than paying the
/// penalty for leaving it. Solved by bisection on `s - ln s` with `s = r^2`,
/// which is decreasing on `(0, 1]` and increasing on `[1, inf)`.
pub fn interval_lambda(lambda: f64) -> Result<(f64, f64)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok((1.0, 1.0));
    }
    let level = 1.0 + lambda;
    let g = |s: f64| s - s.ln() - level;
    // g(exp(-level)) = exp(-level) > 0 and g(2 level) >= 0 since s/2 >= ln s.
    // The sign at the left end can round to zero for large lambda, so the
    // direction of each branch is passed in rather than evaluated.
    let s_lo = bisect(&g, (-level).exp(), 1.0, true);
    let s_hi = bisect(&g, 1.0, 2.0 * level, false);
    Ok((s_lo.sqrt(), s_hi.sqrt()))
}

/// Root of a monotone `g` on `[a, b]`; `ga_positive` is the sign of `g(a)`.
fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, ga_positive: bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if (g(mid) > 0.0) == ga_positive {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Total per-sample penalty `lambda (1 + gamma)` for the spike-slab source.
pub fn memoryless_penalty(lambda: f64, q0: f64, b: u32) -> f64 {
    lambda * (1.0 + memoryless_gamma(q0, b))
}

/// Symbol-by-symbol despeckler for the spike-slab source: output `x_min` when
/// `|y| / x_min` falls inside the interval of [`interval_lambda`] for the
/// given per-sample `penalty`, else `|y|`.
pub fn memoryless_despeckle(y: &[f64], x_min: f64, penalty: f64) -> Result<Vec<f64>> {
    if !(x_min > 0.0) {
        return Err(Error::invalid(format!("spike amplitude must be positive, got {x_min}")));
    }
    let (lo, hi) = interval_lambda(penalty)?;
    Ok(y.iter()
        .map(|&v| {
            let ratio = v.abs() / x_min;
            if (lo..=hi).contains(&ratio) {
                x_min
            } else {
                v.abs()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::RngExt;

    #[test]
    fn interval_examples() {
        assert_eq!(interval_lambda(0.0).unwrap(), (1.0, 1.0));
        let (lo, hi) = interval_lambda(1.0).unwrap();
        // Reference roots computed independently with Brent's method.
        assert!((lo - 0.398_239_048_265_033_1).abs() < 1e-10);
        assert!((hi - 1.773_751_172_126_626_8).abs() < 1e-10);
        assert!((lo * lo - 0.158_594_339_563_039_37).abs() < 1e-10);
        assert!((hi * hi - 3.146_193_220_620_582_5).abs() < 1e-10);
        let (lo3, hi3) = interval_lambda(3.0).unwrap();
        assert!(lo3 < 0.4 && hi3 > 2.0);
        assert!(lo3 < lo && hi3 > hi);
        assert!(interval_lambda(-0.1).is_err());
    }

    #[test]
    fn interval_roots_solve_the_equation() {
        for lambda in [1e-6, 0.01, 0.5, 5.0, 50.0] {
            let (lo, hi) = interval_lambda(lambda).unwrap();
            for r in [lo, hi] {
                let s = r * r;
                assert!((s - s.ln() - 1.0 - lambda).abs() < 1e-9, "lambda {lambda}");
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(memoryless_despeckle(&[0.7], 0.7, 0.0).unwrap(), vec![0.7]);
        assert_eq!(memoryless_despeckle(&[-0.7], 0.7, 2.0).unwrap(), vec![0.7]);
        assert_eq!(memoryless_despeckle(&[5.0], 1.0, 1.0).unwrap(), vec![5.0]);
        assert_eq!(memoryless_despeckle(&[-1.5], 1.0, 1.0).unwrap(), vec![1.0]);
        assert!(memoryless_despeckle(&[1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn scale_consistent() {
        let mut rng = seeded(8);
        let y: Vec<f64> = (0..500).map(|_| rng.random_range(-4.0..4.0)).collect();
        let base = memoryless_despeckle(&y, 0.8, 1.3).unwrap();
        for c in [0.5, 2.0, 8.0] {
            let scaled_y: Vec<f64> = y.iter().map(|v| v * c).collect();
            let scaled = memoryless_despeckle(&scaled_y, 0.8 * c, 1.3).unwrap();
            for (a, b) in scaled.iter().zip(&base) {
                assert!((a - c * b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
