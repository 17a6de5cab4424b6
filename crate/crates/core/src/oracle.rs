//! Quadrature references that do not go through the closed-form constants.
//!
//! Each function integrates a moving-average representation directly, so it
//! can arbitrate the constants and covariance formulas elsewhere in the
//! crate. Normalizations are taken from the integrals themselves (for
//! example k_H^{−2} is the integral of the squared kernel), never from the
//! closed forms under test.

use crate::error::{FgfError, Result};
use crate::quad::{self, Node, Tol};
use crate::special::{normal_pdf, normal_sf, sphere_area};
use std::f64::consts::{FRAC_PI_2, PI};

/// x^a − y^a for x, y > 0, accurate when x ≈ y.
fn pow_diff(x: f64, y: f64, a: f64) -> f64 {
    y.powf(a) * (a * ((x - y) / y).ln_1p()).exp_m1()
}

/// (t − u)_+^a − (−u)_+^a, the one-sided kernel difference, given the
/// signed offsets t − u and −u.
fn one_sided(tu: f64, mu: f64, a: f64) -> f64 {
    let pos = |v: f64| if v > 0.0 { v.powf(a) } else { 0.0 };
    if mu > 0.0 && tu > 0.0 && (tu - mu).abs() < 0.5 * mu {
        pow_diff(tu, mu, a)
    } else {
        pos(tu) - pos(mu)
    }
}

/// |t − u|^a − |u|^a, the two-sided kernel difference, with the distances
/// |t − u| and |u| supplied by the caller.
fn two_sided(dt: f64, d0: f64, a: f64) -> f64 {
    if d0 > 0.0 && (dt - d0).abs() < 0.5 * d0 {
        pow_diff(dt, d0, a)
    } else {
        dt.powf(a) - d0.powf(a)
    }
}

/// Local exponents of the product kernel at 0, t and s: the first factor is
/// singular like |·|^a at 0 and t, the second like |·|^b at 0 and s.
fn singular_exponents(a: f64, b: f64, t: f64, s: f64) -> Vec<(f64, f64)> {
    let neg = |p: f64| p.min(0.0);
    let at = |q: f64| {
        let mut p = 0.0;
        if q == 0.0 || q == t {
            p += neg(a);
        }
        if q == 0.0 || q == s {
            p += neg(b);
        }
        (q, p)
    };
    vec![at(0.0), at(t), at(s)]
}

fn mh(h: f64) -> f64 {
    (libm::tgamma(2.0 * h + 1.0) * (PI * h).sin()).sqrt() / libm::tgamma(h + 0.5)
}

/// E[B^H(t)B^h(s)] for Mandelbrot–van Ness fields driven by one Brownian
/// motion: m_H m_h ∫((t−u)_+^{H−½} − (−u)_+^{H−½})((s−u)_+^{h−½} − (−u)_+^{h−½})du.
pub fn mvn_inner_product(hurst: f64, h: f64, t: f64, s: f64, tol: Tol) -> Result<f64> {
    let (a, b) = (hurst - 0.5, h - 0.5);
    let f = |n: Node| {
        let mu = -n.offset(0.0);
        one_sided(-n.offset(t), mu, a) * one_sided(-n.offset(s), mu, b)
    };
    let mut pts = vec![0.0, t, s];
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    pts.insert(0, pts[0] - 1.0);
    pts.insert(0, f64::NEG_INFINITY);
    let e = quad::integrate_with_singularities(f, &pts, &singular_exponents(a, b, t, s), tol)?;
    Ok(mh(hurst) * mh(h) * e.value)
}

/// ∫_ℝ(|t−u|^a − |u|^a)(|s−u|^b − |u|^b)du.
fn two_sided_integral(a: f64, b: f64, t: f64, s: f64, tol: Tol) -> Result<f64> {
    let f = |n: Node| {
        let d0 = n.dist(0.0);
        two_sided(n.dist(t), d0, a) * two_sided(n.dist(s), d0, b)
    };
    let mut pts = vec![0.0, t, s];
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    // the half-line pieces start one unit away from the singular points
    pts.insert(0, pts[0] - 1.0);
    pts.insert(0, f64::NEG_INFINITY);
    pts.push(pts[pts.len() - 1] + 1.0);
    pts.push(f64::INFINITY);
    Ok(quad::integrate_with_singularities(f, &pts, &singular_exponents(a, b, t, s), tol)?.value)
}

/// E[B^H(t)B^h(s)] for well-balanced two-sided moving averages with k_H
/// fixed by Var B^H(1) = 1.
pub fn well_balanced_inner_product(hurst: f64, h: f64, t: f64, s: f64, tol: Tol) -> Result<f64> {
    let (a, b) = (hurst - 0.5, h - 0.5);
    let nh = two_sided_integral(a, a, 1.0, 1.0, tol)?;
    let nl = two_sided_integral(b, b, 1.0, 1.0, tol)?;
    Ok(two_sided_integral(a, b, t, s, tol)? / (nh * nl).sqrt())
}

/// J^d_{a,b} = ∫_{ℝ^d}(‖e−u‖^a − ‖u‖^a)(‖e−u‖^b − ‖u‖^b)du for a unit vector e,
/// with a = H − d/2, b = h − d/2.
///
/// The integrand is invariant under u ↦ e − u, so J is twice the integral over
/// the half-space u·e < ½, taken in polar coordinates around the origin with
/// φ the angle to e.
pub fn fbf_increment_integral(hurst: f64, h: f64, d: usize, tol: Tol) -> Result<f64> {
    if d == 0 {
        return Err(FgfError::Precondition("dimension must be positive".into()));
    }
    let (a, b) = (hurst - d as f64 / 2.0, h - d as f64 / 2.0);
    if d == 1 {
        let f = |n: Node| {
            let (d1, d0) = (n.dist(1.0), n.dist(0.0));
            two_sided(d1, d0, a) * two_sided(d1, d0, b)
        };
        let sing = [(0.0, a.min(0.0) + b.min(0.0))];
        let e = quad::integrate_with_singularities(f, &[f64::NEG_INFINITY, -1.0, 0.0, 0.5], &sing, tol)?;
        return Ok(2.0 * e.value);
    }
    let dm1 = (d - 1) as i32;
    let diff = |r: f64, c: f64, p: f64| {
        // ρ^p − r^p with ρ² = 1 − 2rc + r²
        let rho2 = 1.0 - 2.0 * r * c + r * r;
        if r > 2.0 {
            r.powf(p) * (0.5 * p * ((1.0 - 2.0 * r * c) / (r * r)).ln_1p()).exp_m1()
        } else {
            rho2.powf(0.5 * p) - r.powf(p)
        }
    };
    let inner_tol = Tol::new(tol.abs * 0.01, tol.rel * 0.1);
    // r^{a+b}·r^{d−1} at the origin
    let origin = [(0.0, a + b + (d - 1) as f64)];
    let err = std::cell::Cell::new(None::<FgfError>);
    let radial = |phi: f64| {
        let c = phi.cos();
        let f = |n: Node| {
            let r = n.x;
            if r == 0.0 {
                return 0.0;
            }
            if r < 0.5 {
                // factor out r^{a+b+d−1} so the individual powers cannot overflow
                let q = (1.0 - 2.0 * r * c + r * r).sqrt() / r;
                return r.powf(a + b + dm1 as f64) * (q.powf(a) - 1.0) * (q.powf(b) - 1.0);
            }
            diff(r, c, a) * diff(r, c, b) * r.powi(dm1)
        };
        let out = if phi < FRAC_PI_2 {
            // geometric pieces keep long ranges near φ = π/2 well resolved
            let rmax = 0.5 / c;
            let mut pts = vec![0.0];
            let mut r = 1.0;
            while r < rmax {
                pts.push(r);
                r *= 4.0;
            }
            pts.push(rmax);
            quad::integrate_with_singularities(f, &pts, &origin, inner_tol)
        } else {
            quad::integrate_with_singularities(f, &[0.0, 1.0, 2.0, f64::INFINITY], &origin, inner_tol)
        };
        match out {
            Ok(e) => e.value,
            Err(e) => {
                err.set(Some(e));
                f64::NAN
            }
        }
    };
    let sd = (d - 2) as i32;
    let outer = quad::integrate_fn(|phi: f64| phi.sin().powi(sd) * radial(phi), &[0.0, FRAC_PI_2, PI], tol);
    if let Some(e) = err.take() {
        return Err(e);
    }
    Ok(2.0 * sphere_area(d - 2) * outer?.value)
}

/// c^d_{H,h} recovered from the increment integrals:
/// cov = c(‖x‖^σ + ‖y‖^σ − ‖x−y‖^σ) with c = J_{Hh}/(2√(J_HH J_hh)).
pub fn fbf_coefficient(hurst: f64, h: f64, d: usize, tol: Tol) -> Result<f64> {
    let j = fbf_increment_integral(hurst, h, d, tol)?;
    let jh = fbf_increment_integral(hurst, hurst, d, tol)?;
    let jl = fbf_increment_integral(h, h, d, tol)?;
    Ok(j / (2.0 * (jh * jl).sqrt()))
}

/// P(X₁ ≥ c₁, X₂ ≥ c₂) for a centred bivariate normal with standard
/// deviations s₁, s₂ and correlation ρ, by integrating the conditional tail
/// of X₂ against the density of X₁.
pub fn orthant_probability(s1: f64, s2: f64, rho: f64, c1: f64, c2: f64, tol: Tol) -> Result<f64> {
    if !(s1 > 0.0 && s2 > 0.0 && rho.abs() < 1.0) {
        return Err(FgfError::Precondition("need positive scales and |ρ| < 1".into()));
    }
    let z1 = c1 / s1;
    let k = (1.0 - rho * rho).sqrt();
    let f = |n: Node| {
        let z = n.x;
        normal_pdf(z) * normal_sf((c2 / s2 - rho * z) / k)
    };
    let e = quad::integrate(f, &[z1, z1 + 1.0, f64::INFINITY], tol)?;
    Ok(e.value)
}
