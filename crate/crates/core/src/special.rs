//! Scalar special functions shared by the constants, covariance and bounds code.

use crate::error::{FgfError, Result};
use std::f64::consts::{PI, SQRT_2};

/// Γ(x), rejecting the poles at non-positive integers.
pub fn gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || (x <= 0.0 && (x - x.round()).abs() < 1e-12) {
        return Err(FgfError::Singular(format!("Gamma pole at {x}")));
    }
    Ok(libm::tgamma(x))
}

/// Γ on arguments the caller knows are positive.
pub(crate) fn gamma_pos(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    libm::tgamma(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail Q(x) = P(Z > x) of a standard normal.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// (e^{s·l} − 1)/s, continuous at s = 0 where it equals l.
///
/// This is the workhorse behind l^s(z) = (1 − |z|^s)/s = −em1s(s, ln|z|),
/// which must stay accurate when s is tiny.
pub fn em1s(s: f64, l: f64) -> f64 {
    if l == f64::NEG_INFINITY {
        return if s > 0.0 { -1.0 / s } else { f64::NEG_INFINITY };
    }
    let z = s * l;
    if z.abs() < 1e-300 {
        return l;
    }
    z.exp_m1() / s
}

/// (e^{z} − 1 − z)/z² evaluated without cancellation.
pub fn em1_minus_lin(z: f64) -> f64 {
    if z.abs() < 0.1 {
        // Taylor series: Σ z^k/(k+2)!
        let mut term = 0.5;
        let mut sum = 0.5;
        for k in 1..20 {
            term *= z / (k as f64 + 2.0);
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Surface area of the unit sphere S^{n} ⊂ ℝ^{n+1}; S_0 = 2 (two points).
pub fn sphere_area(n: usize) -> f64 {
    let k = (n + 1) as f64;
    2.0 * PI.powf(k / 2.0) / gamma_pos(k / 2.0)
}

/// Volume of the unit ball in ℝ^d.
pub fn ball_volume(d: usize) -> f64 {
    let k = d as f64;
    PI.powf(k / 2.0) / gamma_pos(k / 2.0 + 1.0)
}
