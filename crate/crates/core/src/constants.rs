//! Normalizing constants of the three field constructions and the
//! covariance prefactor C_{H,h}.
//!
//! Conventions (each one arbitrated by the quadrature oracles in
//! [`crate::oracle`]):
//! * `a_{h,H}` carries the sign that makes b_{H,H} = +½, i.e. Var B̃^H(t) = |t|^{2H}.
//! * `k^d_H` is normalized so the reflected-kernel field has Var B^H(x) = ‖x‖^{2H}.
//! * `c^d_{H,h}` uses Γ(H + d/2), which gives c^d_{H,H} = ½ in every dimension.

use crate::covariance::{CovarianceModel, ModelKind};
use crate::error::{FgfError, Result};
use crate::special::{gamma, gamma_pos};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// A Hurst index in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(FgfError::Domain {
                name: "H",
                value,
                range: "(0, 1)",
            })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Checks the stricter bound H < `bound` required by some models.
    pub fn below(self, bound: f64) -> Result<Self> {
        if self.0 < bound {
            Ok(self)
        } else {
            Err(FgfError::Domain {
                name: "H",
                value: self.0,
                range: "(0, H0)",
            })
        }
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = FgfError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

impl std::fmt::Display for HurstParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn below_half(h: HurstParam) -> Result<f64> {
    let v = h.value();
    if v < 0.5 {
        Ok(v)
    } else {
        Err(FgfError::Domain {
            name: "H",
            value: v,
            range: "(0, 1/2)",
        })
    }
}

/// m_H, the Mandelbrot–van Ness normalization.
pub fn m_h(h: HurstParam) -> f64 {
    let v = h.value();
    (gamma_pos(2.0 * v + 1.0) * (PI * v).sin()).sqrt() / gamma_pos(v + 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MvnConstants {
    pub a: f64,
    pub b: f64,
    pub o: f64,
}

/// Constants of the Mandelbrot–van Ness cross-covariance
/// E[B̃^H(t)B̃^h(s)] = b(|s|^σ+|t|^σ−|t−s|^σ) − o·f(s,t), σ = h+H.
pub fn mvn_constants(h: HurstParam, hh: HurstParam) -> Result<MvnConstants> {
    let (h, hh) = (h.value(), hh.value());
    let sigma = h + hh;
    if (sigma - 1.0).abs() < 1e-12 {
        return Err(FgfError::Singular(format!(
            "h + H = {sigma} hits the pole of Γ(−(h+H))"
        )));
    }
    let g = gamma(-sigma)?;
    let root = |x: f64| (gamma_pos(2.0 * x + 1.0) * (PI * x).sin()).sqrt();
    let a = -root(h) * root(hh) * g / PI;
    let b = a * ((h - hh) * PI / 2.0).cos() * (sigma * PI / 2.0).cos();
    let o = a * ((h - hh) * PI / 2.0).sin() * (sigma * PI / 2.0).sin();
    Ok(MvnConstants { a, b, o })
}

/// k^d_H for the reflected-kernel (well-balanced / Lindstrøm) construction.
pub fn kd_h(h: HurstParam, d: usize) -> Result<f64> {
    let v = below_half(h)?;
    if d == 0 {
        return Err(FgfError::Domain {
            name: "d",
            value: 0.0,
            range: "positive integers",
        });
    }
    let q = d as f64 / 4.0;
    let num = gamma_pos(q - v / 2.0).powi(2)
        * gamma_pos(v + d as f64 / 2.0)
        * v
        * gamma_pos(2.0 * v)
        * (PI * v).sin();
    let den = 2f64.powf(2.0 * v)
        * PI.powf((d as f64 + 1.0) / 2.0)
        * gamma_pos(q + v / 2.0).powi(2)
        * gamma_pos(v + 0.5);
    Ok((num / den).sqrt())
}

/// c^d_{H,h}, the FBF cross-covariance coefficient.
pub fn cd_hh(h1: HurstParam, h2: HurstParam, d: usize) -> Result<f64> {
    let (x, y) = (below_half(h1)?, below_half(h2)?);
    if d == 0 {
        return Err(FgfError::Domain {
            name: "d",
            value: 0.0,
            range: "positive integers",
        });
    }
    let half_d = d as f64 / 2.0;
    let s = x + y;
    let part = |v: f64| gamma_pos(v + half_d) * v * gamma_pos(2.0 * v) * (PI * v).sin();
    // multiply the two radicands in a fixed order so the result is symmetric bit for bit
    let (p, q) = if x <= y { (part(x), part(y)) } else { (part(y), part(x)) };
    let (gx, gy) = if x <= y {
        (gamma_pos(x + 0.5), gamma_pos(y + 0.5))
    } else {
        (gamma_pos(y + 0.5), gamma_pos(x + 0.5))
    };
    let num = gamma_pos((s + 1.0) / 2.0) * (p * q).sqrt();
    let den = gamma_pos((s + d as f64) / 2.0) * s * gamma_pos(s) * (s * PI / 2.0).sin() * (gx * gy).sqrt();
    Ok(num / den)
}

/// C_{H,h}: the prefactor in cov X = C((1−‖x−y‖^σ)/σ + g).
pub fn c_hh(h1: HurstParam, h2: HurstParam, model: &CovarianceModel) -> Result<f64> {
    model.check_pair(h1, h2)?;
    let (x, y) = (h1.value(), h2.value());
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let root = (gamma_pos(lo) * gamma_pos(hi)).sqrt() * (lo + hi);
    let coef = match model.kind {
        ModelKind::MvN1D => mvn_constants(h2, h1)?.b,
        ModelKind::WellBalanced1D => cd_hh(h1, h2, 1)?,
        ModelKind::Fbf => cd_hh(h1, h2, model.dim)?,
    };
    Ok(coef * root)
}

/// Every constant for one (H, h, d), as listed together in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantSet {
    pub hurst: f64,
    pub h: f64,
    pub dim: usize,
    pub m_h: f64,
    pub a_hh: f64,
    pub b_hh: f64,
    pub o_hh: f64,
    pub kd_h: f64,
    pub cd_hh: f64,
}

impl ConstantSet {
    /// MvN constants need h + H ≠ 1; the reflected-kernel ones need H, h < ½.
    pub fn evaluate(hurst: HurstParam, h: HurstParam, dim: usize) -> Result<Self> {
        let mvn = mvn_constants(h, hurst)?;
        Ok(Self {
            hurst: hurst.value(),
            h: h.value(),
            dim,
            m_h: m_h(hurst),
            a_hh: mvn.a,
            b_hh: mvn.b,
            o_hh: mvn.o,
            kd_h: kd_h(hurst, dim)?,
            cd_hh: cd_hh(hurst, h, dim)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hp(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn hurst_domain() {
        assert!(HurstParam::new(0.0).is_err());
        assert!(HurstParam::new(1.0).is_err());
        assert!(HurstParam::new(f64::NAN).is_err());
        assert!(hp(0.4).below(0.5).is_ok());
        assert!(hp(0.6).below(0.5).is_err());
    }

    #[test]
    fn m_h_values() {
        assert_relative_eq!(m_h(hp(0.5)), 1.0, max_relative = 1e-14);
        // √(Γ(1.5) sin(π/4))/Γ(0.75)
        assert_relative_eq!(m_h(hp(0.25)), 0.645_998_003_740_752, max_relative = 1e-12);
        let mut prev = f64::INFINITY;
        for k in 2..40 {
            let v = m_h(hp(0.5f64.powi(k)));
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn mvn_diagonal_gives_unit_variance_coefficient() {
        for &v in &[0.05, 0.2, 0.3, 0.45, 0.7, 0.95] {
            let c = mvn_constants(hp(v), hp(v)).unwrap();
            assert_relative_eq!(c.b, 0.5, max_relative = 1e-12);
            assert!(c.o.abs() < 1e-14);
        }
    }

    #[test]
    fn mvn_singular_at_unit_sum() {
        assert!(matches!(mvn_constants(hp(0.4), hp(0.6)), Err(FgfError::Singular(_))));
    }

    #[test]
    fn cd_diagonal_is_half() {
        for d in 1..=4 {
            for &v in &[0.01, 0.15, 0.2, 0.49] {
                assert_relative_eq!(cd_hh(hp(v), hp(v), d).unwrap(), 0.5, max_relative = 1e-12);
            }
        }
    }

    /// The spectral form c = 2π^{(d+1)/2}kk/(Γ(d/4−H/2)Γ(d/4−h/2))·… with our
    /// k gives the increment constant, which is 2c.
    #[test]
    fn spectral_form_agrees_with_closed_form() {
        for d in 1..=3 {
            for &(x, y) in &[(0.1, 0.3), (0.2, 0.2), (0.05, 0.45), (0.33, 0.17)] {
                let q = d as f64 / 4.0;
                let s = x + y;
                let spectral = 2.0 * PI.powf((d as f64 + 1.0) / 2.0) * kd_h(hp(x), d).unwrap() * kd_h(hp(y), d).unwrap()
                    / (gamma_pos(q - x / 2.0) * gamma_pos(q - y / 2.0))
                    * gamma_pos((s + 1.0) / 2.0)
                    / gamma_pos((s + d as f64) / 2.0)
                    * 2f64.powf(s)
                    * gamma_pos(q + x / 2.0)
                    * gamma_pos(q + y / 2.0)
                    / (s * gamma_pos(s) * (s * PI / 2.0).sin());
                assert_relative_eq!(spectral, 2.0 * cd_hh(hp(x), hp(y), d).unwrap(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn c_diagonal_is_gamma_one_plus_h() {
        let model = CovarianceModel::fbf(2).unwrap();
        for &v in &[1e-4, 0.01, 0.2] {
            assert_relative_eq!(c_hh(hp(v), hp(v), &model).unwrap(), gamma_pos(1.0 + v), max_relative = 1e-12);
        }
    }

    #[test]
    fn c_limit_and_monotone_shrink() {
        for d in 1..=3 {
            let model = CovarianceModel::fbf(d).unwrap();
            assert!((c_hh(hp(1e-4), hp(1e-4), &model).unwrap() - 1.0).abs() < 0.01);
            let mut prev = f64::INFINITY;
            for k in 3..=16 {
                let v = 0.5f64.powi(k);
                let gap = (c_hh(hp(v), hp(v), &model).unwrap() - 1.0).abs();
                assert!(gap < prev, "k = {k}");
                prev = gap;
            }
        }
        for model in [CovarianceModel::mvn(), CovarianceModel::well_balanced()] {
            assert!((c_hh(hp(1e-4), hp(1e-4), &model).unwrap() - 1.0).abs() < 0.01);
        }
    }

    /// C_{H,H} = Γ(1+H) = 1 − γ_E·H + O(H²), so the gap at H = 1e-5 is
    /// about 5.77e-6: a 1e-6 tolerance at that H is not attainable.
    #[test]
    fn c_gap_at_tiny_h_is_euler_gamma_times_h() {
        let model = CovarianceModel::fbf(1).unwrap();
        let gap = 1.0 - c_hh(hp(1e-5), hp(1e-5), &model).unwrap();
        assert_relative_eq!(gap, 5.772_057_744_323_265e-6, max_relative = 1e-6);
    }

    #[test]
    fn constant_set_collects() {
        let cs = ConstantSet::evaluate(hp(0.3), hp(0.3), 1).unwrap();
        assert!(cs.o_hh.abs() < 1e-14);
        assert_relative_eq!(cs.cd_hh, 0.5, max_relative = 1e-12);
        assert!(cs.kd_h > 0.0 && cs.kd_h.is_finite());
        assert!(ConstantSet::evaluate(hp(0.6), hp(0.3), 1).is_err());
    }

    proptest! {
        #[test]
        fn cd_symmetric(x in 0.001f64..0.499, y in 0.001f64..0.499, d in 1usize..5) {
            prop_assert_eq!(cd_hh(hp(x), hp(y), d).unwrap(), cd_hh(hp(y), hp(x), d).unwrap());
        }

        #[test]
        fn c_symmetric(x in 0.001f64..0.499, y in 0.001f64..0.499, d in 1usize..4) {
            let m = CovarianceModel::fbf(d).unwrap();
            prop_assert_eq!(c_hh(hp(x), hp(y), &m).unwrap(), c_hh(hp(y), hp(x), &m).unwrap());
        }

        #[test]
        fn o_vanishes_on_diagonal(x in 0.001f64..0.999) {
            prop_assume!((2.0 * x - 1.0).abs() > 1e-6);
            prop_assert!(mvn_constants(hp(x), hp(x)).unwrap().o.abs() < 1e-14);
        }

        #[test]
        fn kd_positive(x in 0.001f64..0.499, d in 1usize..6) {
            let k = kd_h(hp(x), d).unwrap();
            prop_assert!(k > 0.0 && k.is_finite());
        }
    }
}
