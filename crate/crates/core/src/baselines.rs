//! Classical despeckling filters, all working on the amplitude `|y|`.
//!
//! Local statistics use a centered window truncated at the edges and the
//! population variance (divide by the number of samples in the window). No
//! bias correction by `E|W|` is applied.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor added to `y^2` before taking logs in [`tv_log`].
pub const TV_LOG_FLOOR: f64 = 1e-12;

/// Coefficient of variation of `|W|` for `W ~ N(0, 1)`: `sqrt(pi/2 - 1)`.
pub fn speckle_cv() -> f64 {
    (PI / 2.0 - 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub window: usize,
    pub c_w: f64,
    pub damping: f64,
    pub tv_weight: f64,
}

impl FilterConfig {
    /// Window of half the mean segment length, rounded to the nearest odd
    /// integer (ties go up).
    pub fn for_q0(q0: f64) -> Result<Self> {
        if !(q0 > 0.0 && q0 <= 1.0) {
            return Err(Error::invalid(format!("q0 must lie in (0, 1], got {q0}")));
        }
        Ok(Self {
            window: odd_window(1.0 / (2.0 * q0)),
            c_w: speckle_cv(),
            damping: 2.0,
            tv_weight: 1.0,
        })
    }
}

fn odd_window(target: f64) -> usize {
    // Odd integers 2m + 1 nearest to target: m = round((target - 1) / 2).
    let m = ((target - 1.0) / 2.0 + 0.5).floor().max(0.0);
    2 * m as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnhancedBase {
    Lee,
    Kuan,
}

pub fn amplitude(y: &[f64]) -> Vec<f64> {
    y.iter().map(|v| v.abs()).collect()
}

/// Windowed mean and population standard deviation at every sample.
struct LocalStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl LocalStats {
    fn new(a: &[f64], window: usize) -> Self {
        let n = a.len();
        let half = window / 2;
        let mut s1 = Vec::with_capacity(n + 1);
        let mut s2 = Vec::with_capacity(n + 1);
        s1.push(0.0);
        s2.push(0.0);
        for &v in a {
            s1.push(s1.last().unwrap() + v);
            s2.push(s2.last().unwrap() + v * v);
        }
        let mut mean = Vec::with_capacity(n);
        let mut std = Vec::with_capacity(n);
        for i in 0..n {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            let m = (hi - lo) as f64;
            let mu = (s1[hi] - s1[lo]) / m;
            let var = ((s2[hi] - s2[lo]) / m - mu * mu).max(0.0);
            mean.push(mu);
            std.push(var.sqrt());
        }
        Self { mean, std }
    }

    /// Local coefficient of variation; zero when the window is all zeros.
    fn cv(&self, i: usize) -> f64 {
        if self.mean[i] > 0.0 {
            self.std[i] / self.mean[i]
        } else {
            0.0
        }
    }
}

fn check_window(window: usize, n: usize) -> Result<()> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid(format!("window must be odd and positive, got {window}")));
    }
    if window > n.max(1) {
        return Err(Error::invalid(format!("window {window} exceeds signal length {n}")));
    }
    Ok(())
}

pub fn boxcar(a: &[f64], window: usize) -> Result<Vec<f64>> {
    check_window(window, a.len())?;
    Ok(LocalStats::new(a, window).mean)
}

/// `c_w^2 / c_a^2`, with the `0/0` case read as 0.
fn noise_ratio(c_w: f64, c_a: f64) -> f64 {
    if c_w == 0.0 {
        0.0
    } else if c_a == 0.0 {
        f64::INFINITY
    } else {
        (c_w / c_a).powi(2)
    }
}

fn lee_gain(c_w: f64, c_a: f64) -> f64 {
    (1.0 - noise_ratio(c_w, c_a)).max(0.0)
}

fn kuan_gain(c_w: f64, c_a: f64) -> f64 {
    lee_gain(c_w, c_a) / (1.0 + c_w * c_w)
}

fn check_cw(c_w: f64) -> Result<()> {
    if !(c_w >= 0.0 && c_w.is_finite()) {
        return Err(Error::invalid(format!("c_w must be finite and >= 0, got {c_w}")));
    }
    Ok(())
}

fn gain_filter(a: &[f64], window: usize, c_w: f64, gain: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    check_window(window, a.len())?;
    check_cw(c_w)?;
    let st = LocalStats::new(a, window);
    Ok(a.iter()
        .enumerate()
        .map(|(i, &v)| {
            let g = gain(c_w, st.cv(i));
            st.mean[i] + g * (v - st.mean[i])
        })
        .collect())
}

pub fn lee(a: &[f64], window: usize, c_w: f64) -> Result<Vec<f64>> {
    gain_filter(a, window, c_w, lee_gain)
}

pub fn kuan(a: &[f64], window: usize, c_w: f64) -> Result<Vec<f64>> {
    gain_filter(a, window, c_w, kuan_gain)
}

/// Exponential-kernel weighted mean with weights
/// `exp(-damping (c_a / c_w)^2 |d|)` over window offsets `d`.
pub fn frost(a: &[f64], window: usize, c_w: f64, damping: f64) -> Result<Vec<f64>> {
    check_window(window, a.len())?;
    if !(damping > 0.0 && damping.is_finite()) {
        return Err(Error::invalid(format!("damping must be positive, got {damping}")));
    }
    if !(c_w > 0.0 && c_w.is_finite()) {
        return Err(Error::invalid(format!("c_w must be positive, got {c_w}")));
    }
    let n = a.len();
    let half = window / 2;
    let st = LocalStats::new(a, window);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ratio = st.cv(i) / c_w;
        let r = (-damping * ratio * ratio).exp();
        let (mut num, mut den) = (a[i], 1.0);
        let mut w = 1.0;
        for d in 1..=half {
            w *= r;
            if w == 0.0 {
                break;
            }
            if i >= d {
                num += w * a[i - d];
                den += w;
            }
            if i + d < n {
                num += w * a[i + d];
                den += w;
            }
        }
        out.push(num / den);
    }
    Ok(out)
}

/// Lee or Kuan with the heterogeneity classes: local mean where
/// `c_a < c_w`, the input where `c_a >= sqrt(3) c_w`, the base filter
/// in between.
pub fn enhanced(base: EnhancedBase, a: &[f64], window: usize, c_w: f64) -> Result<Vec<f64>> {
    check_window(window, a.len())?;
    check_cw(c_w)?;
    let gain = match base {
        EnhancedBase::Lee => lee_gain,
        EnhancedBase::Kuan => kuan_gain,
    };
    let c_max = 3f64.sqrt() * c_w;
    let st = LocalStats::new(a, window);
    Ok(a.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c_a = st.cv(i);
            if c_a < c_w {
                st.mean[i]
            } else if c_a >= c_max {
                v
            } else {
                st.mean[i] + gain(c_w, c_a) * (v - st.mean[i])
            }
        })
        .collect())
}

/// Total-variation denoising in the log-amplitude domain: `z = ln(y^2 + floor) / 2`
/// is denoised with an exact 1-D TV solver and mapped back with `exp`.
pub fn tv_log(y: &[f64], tv_weight: f64) -> Result<Vec<f64>> {
    let z: Vec<f64> = y.iter().map(|v| 0.5 * (v * v + TV_LOG_FLOOR).ln()).collect();
    Ok(tv_denoise(&z, tv_weight)?.into_iter().map(f64::exp).collect())
}

/// Exact minimizer of `0.5 sum (x_i - z_i)^2 + weight sum |x_{i+1} - x_i|`.
///
/// Direct non-iterative algorithm of Condat (2013), linear in practice.
pub fn tv_denoise(z: &[f64], weight: f64) -> Result<Vec<f64>> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::invalid(format!("TV weight must be finite and >= 0, got {weight}")));
    }
    let n = z.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return Ok(out);
    }
    let lam = weight;
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lam, -lam);
    let (mut vmin, mut vmax) = (z[0] - lam, z[0] + lam);
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = z[k0];
                umin = lam;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = z[k0];
                umax = -lam;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                out[k0..=k].fill(vmin);
                return Ok(out);
            }
        }
        umin += z[k + 1] - vmin;
        if umin < -lam {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = z[k0];
            vmax = vmin + 2.0 * lam;
            umin = lam;
            umax = -lam;
            continue;
        }
        umax += z[k + 1] - vmax;
        if umax > lam {
            loop {
                out[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmax = z[k0];
            vmin = vmax - 2.0 * lam;
            umin = lam;
            umax = -lam;
            continue;
        }
        k += 1;
        if umin >= lam {
            kminus = k;
            vmin += (umin - lam) / (kminus - k0 + 1) as f64;
            umin = lam;
        }
        if umax <= -lam {
            kplus = k;
            vmax += (umax + lam) / (kplus - k0 + 1) as f64;
            umax = -lam;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::RngExt;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn windows_from_q0() {
        assert_eq!(FilterConfig::for_q0(0.1).unwrap().window, 5);
        assert_eq!(FilterConfig::for_q0(0.01).unwrap().window, 51);
        assert_eq!(FilterConfig::for_q0(0.001).unwrap().window, 501);
        assert_eq!(odd_window(4.0), 5);
        assert_eq!(odd_window(6.0), 7);
        assert_eq!(odd_window(0.5), 1);
        assert!((speckle_cv() - 0.755_510_639_762_867).abs() < 1e-12);
    }

    #[test]
    fn amplitude_examples() {
        assert_eq!(amplitude(&[-2.0, 0.0, 1.5]), vec![2.0, 0.0, 1.5]);
    }

    #[test]
    fn boxcar_examples() {
        let imp = [0.0, 0.0, 1.0, 0.0, 0.0];
        let out = boxcar(&imp, 3).unwrap();
        assert!(close(&out, &[0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0], 1e-15));
        assert_eq!(boxcar(&imp, 1).unwrap(), imp.to_vec());
        assert!(close(&boxcar(&[2.0; 9], 5).unwrap(), &[2.0; 9], 1e-15));
        // Truncated edge: first sample averages a[0..2].
        assert!(close(&boxcar(&[1.0, 3.0, 5.0], 3).unwrap(), &[2.0, 3.0, 4.0], 1e-15));
        assert!(boxcar(&imp, 0).is_err());
        assert!(boxcar(&imp, 4).is_err());
        assert!(boxcar(&imp, 7).is_err());
    }

    #[test]
    fn lee_kuan_examples() {
        let c = [3.0; 7];
        for f in [lee, kuan] {
            assert!(close(&f(&c, 3, 0.5).unwrap(), &c, 1e-15));
        }
        // Mildly varying window (c_a < c_w): gain clamps to 0, output is the local mean.
        let a = [1.0, 1.1, 0.9, 1.0, 1.05];
        let st = LocalStats::new(&a, 5);
        assert!(close(&lee(&a, 5, 0.7).unwrap(), &st.mean, 1e-15));
        // Kuan with c_w = 0 is the identity.
        let b = [0.2, 4.0, 0.1, 3.0, 0.5];
        assert!(close(&kuan(&b, 3, 0.0).unwrap(), &b, 1e-15));
        // Very heterogeneous with tiny c_w: Lee is close to the identity.
        assert!(close(&lee(&b, 3, 1e-4).unwrap(), &b, 1e-6));
    }

    #[test]
    fn kuan_at_matching_cv_is_mean() {
        let a = [1.0, 2.0, 3.0, 2.0, 1.0];
        let st = LocalStats::new(&a, 5);
        let c_a = st.cv(2);
        let out = kuan(&a, 5, c_a).unwrap();
        assert!((out[2] - st.mean[2]).abs() < 1e-12);
    }

    #[test]
    fn frost_examples() {
        let mut rng = seeded(1);
        let a: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..2.0)).collect();
        let bx = boxcar(&a, 7).unwrap();
        assert!(close(&frost(&a, 7, 0.75, 1e-14).unwrap(), &bx, 1e-9));
        // Huge damping collapses the kernel onto the center sample.
        assert!(close(&frost(&a, 7, 0.75, 1e6).unwrap(), &a, 1e-12));
        // Homogeneous region: c_a = 0 gives the plain mean.
        assert!(close(&frost(&[0.5; 11], 5, 0.75, 2.0).unwrap(), &[0.5; 11], 1e-15));
        assert!(frost(&a, 7, 0.75, 0.0).is_err());
    }

    #[test]
    fn frost_matches_direct_kernel() {
        let mut rng = seeded(2);
        let a: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..2.0)).collect();
        let (w, cw, damp) = (9usize, 0.75, 2.0);
        let out = frost(&a, w, cw, damp).unwrap();
        let st = LocalStats::new(&a, w);
        for i in 0..a.len() {
            let k = damp * (st.cv(i) / cw).powi(2);
            let (mut num, mut den) = (0.0, 0.0);
            for j in i.saturating_sub(w / 2)..(i + w / 2 + 1).min(a.len()) {
                let wt = (-k * (i as f64 - j as f64).abs()).exp();
                num += wt * a[j];
                den += wt;
            }
            assert!((out[i] - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn enhanced_branches() {
        // Constant region: mean branch.
        assert!(close(
            &enhanced(EnhancedBase::Lee, &[2.0; 9], 3, 0.75).unwrap(),
            &[2.0; 9],
            1e-15
        ));
        // Isolated spike is retained.
        let mut a = vec![0.01; 11];
        a[5] = 100.0;
        let out = enhanced(EnhancedBase::Kuan, &a, 5, 0.75).unwrap();
        assert_eq!(out[5], 100.0);
        // Mid-range c_a equals the base filter.
        let b = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0];
        let st = LocalStats::new(&b, 3);
        let c_a = st.cv(3);
        let c_w = c_a / 1.2;
        let base = lee(&b, 3, c_w).unwrap();
        let enh = enhanced(EnhancedBase::Lee, &b, 3, c_w).unwrap();
        assert!((base[3] - enh[3]).abs() < 1e-15);
    }

    /// Accelerated projected gradient on the dual of the TV problem.
    fn tv_dual_oracle(z: &[f64], weight: f64, iters: usize) -> Vec<f64> {
        let n = z.len();
        let primal = |u: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let left = if i > 0 { u[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { u[i] } else { 0.0 };
                    z[i] - left + right
                })
                .collect()
        };
        let mut u = vec![0.0; n - 1];
        let mut v = u.clone();
        let mut t = 1.0f64;
        for _ in 0..iters {
            let x = primal(&v);
            let next: Vec<f64> = (0..n - 1)
                .map(|i| (v[i] + 0.25 * (x[i + 1] - x[i])).clamp(-weight, weight))
                .collect();
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            for i in 0..n - 1 {
                v[i] = next[i] + (t - 1.0) / t_next * (next[i] - u[i]);
            }
            u = next;
            t = t_next;
        }
        primal(&u)
    }

    fn tv_objective(x: &[f64], z: &[f64], w: f64) -> f64 {
        let fit: f64 = x.iter().zip(z).map(|(a, b)| 0.5 * (a - b).powi(2)).sum();
        fit + w * x.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>()
    }

    #[test]
    fn tv_matches_dual_oracle() {
        let mut rng = seeded(3);
        for case in 0..40 {
            let n = 2 + case % 30;
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w = [0.05, 0.3, 1.0, 5.0][case % 4];
            let exact = tv_denoise(&z, w).unwrap();
            let oracle = tv_dual_oracle(&z, w, 20_000);
            assert!(close(&exact, &oracle, 1e-5), "case {case}");
            assert!(tv_objective(&exact, &z, w) <= tv_objective(&oracle, &z, w) + 1e-9);
        }
    }

    #[test]
    fn tv_extremes() {
        let z = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(tv_denoise(&z, 0.0).unwrap(), z.to_vec());
        let mean = z.iter().sum::<f64>() / 4.0;
        assert!(close(&tv_denoise(&z, 1e6).unwrap(), &[mean; 4], 1e-9));
        assert_eq!(tv_denoise(&[4.0], 2.0).unwrap(), vec![4.0]);
        assert!(tv_denoise(&[], 1.0).unwrap().is_empty());
        assert!(tv_denoise(&z, -1.0).is_err());
    }

    #[test]
    fn tv_log_examples() {
        let y = [-0.3, 0.0, 2.0, 1e-3];
        let out = tv_log(&y, 0.0).unwrap();
        for (o, v) in out.iter().zip(&y) {
            assert!((o - (v * v + TV_LOG_FLOOR).sqrt()).abs() < 1e-12);
        }
        let big = tv_log(&[0.5, 1.0, 2.0], 1e6).unwrap();
        assert!(close(&big, &[1.0; 3], 1e-6));
        // Noiseless piecewise-constant input with a small weight.
        let clean: Vec<f64> = (0..40).map(|i| if i < 20 { 0.5 } else { 0.9 }).collect();
        let rec = tv_log(&clean, 1e-8).unwrap();
        assert!(close(&rec, &clean, 1e-6));
    }

    fn amplitudes(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..3.0, 12..max_len)
    }

    proptest! {
        #[test]
        fn gains_and_ranges(a in amplitudes(60), c_w in 0.05f64..2.0, half in 0usize..4) {
            let w = 2 * half + 1;
            prop_assume!(w <= a.len());
            let st = LocalStats::new(&a, w);
            for i in 0..a.len() {
                let (gl, gk) = (lee_gain(c_w, st.cv(i)), kuan_gain(c_w, st.cv(i)));
                prop_assert!((0.0..=1.0).contains(&gl) && (0.0..=1.0).contains(&gk));
            }
            for out in [lee(&a, w, c_w).unwrap(), kuan(&a, w, c_w).unwrap()] {
                for (i, v) in out.iter().enumerate() {
                    let lo = i.saturating_sub(half);
                    let hi = (i + half + 1).min(a.len());
                    let win = &a[lo..hi];
                    let mn = win.iter().cloned().fold(f64::INFINITY, f64::min);
                    let mx = win.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(*v >= mn - 1e-12 && *v <= mx + 1e-12);
                }
            }
        }

        #[test]
        fn enhanced_picks_a_branch(a in amplitudes(60), c_w in 0.05f64..2.0, half in 0usize..4) {
            let w = 2 * half + 1;
            prop_assume!(w <= a.len());
            let st = LocalStats::new(&a, w);
            for base in [EnhancedBase::Lee, EnhancedBase::Kuan] {
                let plain = match base {
                    EnhancedBase::Lee => lee(&a, w, c_w).unwrap(),
                    EnhancedBase::Kuan => kuan(&a, w, c_w).unwrap(),
                };
                let out = enhanced(base, &a, w, c_w).unwrap();
                for i in 0..a.len() {
                    let v = out[i];
                    prop_assert!(v == st.mean[i] || v == plain[i] || v == a[i]);
                }
            }
        }

        #[test]
        fn shift_equivariant_interior(a in amplitudes(50), shift in 1usize..5, half in 1usize..4) {
            let w = 2 * half + 1;
            prop_assume!(a.len() > 2 * w + shift);
            let shifted = &a[shift..];
            let filters: Vec<Box<dyn Fn(&[f64]) -> Vec<f64>>> = vec![
                Box::new(move |x| boxcar(x, w).unwrap()),
                Box::new(move |x| lee(x, w, 0.7).unwrap()),
                Box::new(move |x| kuan(x, w, 0.7).unwrap()),
                Box::new(move |x| frost(x, w, 0.7, 2.0).unwrap()),
                Box::new(move |x| enhanced(EnhancedBase::Lee, x, w, 0.7).unwrap()),
            ];
            for f in &filters {
                let full = f(&a);
                let part = f(shifted);
                // Samples whose window lies inside both signals.
                for j in half..part.len() - half {
                    prop_assert!((part[j] - full[j + shift]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn tv_is_optimal(z in prop::collection::vec(-3.0f64..3.0, 2..25), w in 0.0f64..3.0, i in 0usize..25, d in -0.5f64..0.5) {
            let x = tv_denoise(&z, w).unwrap();
            let mut p = x.clone();
            let idx = i % z.len();
            p[idx] += d;
            prop_assert!(tv_objective(&x, &z, w) <= tv_objective(&p, &z, w) + 1e-9);
        }
    }
}
