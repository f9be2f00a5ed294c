//! Shared statistical helpers: stable logistic transforms, normal quantiles,
//! Monte Carlo intervals and empirical quantiles.

use statrs::distribution::{ContinuousCDF, Normal};

/// Inverse logit, `1 / (1 + exp(-eta))`.
#[inline]
pub fn expit(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// `ln(expit(eta))`, computed without underflow for very negative `eta`.
#[inline]
pub fn log_expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

/// Standard normal quantile at probability `p`.
pub fn z_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(p)
}

/// 95% Monte Carlo interval for an estimated probability: `p ± 1.96·√(p(1−p)/nsim)`.
pub fn mc_interval(p_hat: f64, nsim: u64) -> (f64, f64) {
    let se = (p_hat * (1.0 - p_hat) / nsim as f64).sqrt();
    (p_hat - 1.96 * se, p_hat + 1.96 * se)
}

/// Type-7 (linear interpolation) empirical quantile on a sorted slice.
///
/// This is the default quantile definition in most statistical software:
/// `h = (n−1)p`, interpolate between the floor and ceiling order statistics.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&p), "quantile probability out of [0,1]");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// FNV-1a 64-bit hash; used to derive stable numeric ids from text labels.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
