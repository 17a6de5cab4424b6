//! Numerical forms of the analytic inequalities behind the convergence
//! argument: Savage's orthant bound, the Gaussian tail bound, the h* and β
//! choices, the log-approximation envelope and the Riesz integral identity.

use crate::chaos::{f_kappa_unimodal, gamma_star, hurst_grid_s};
use crate::constants::HurstParam;
use crate::covariance::norm;
use crate::error::{FgfError, Result};
use crate::oracle::orthant_probability;
use crate::quad::{integrate_fn, Tol};
use crate::report::{DiagnosticReport, Entry};
use crate::special::{em1s, gamma_pos, normal_sf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateGaussianSpec {
    pub cov: [[f64; 2]; 2],
    pub c: [f64; 2],
}

impl BivariateGaussianSpec {
    pub fn new(cov: [[f64; 2]; 2], c: [f64; 2]) -> Result<Self> {
        if cov[0][1] != cov[1][0] || !(cov[0][0] > 0.0 && cov[1][1] > 0.0) {
            return Err(FgfError::Precondition("Σ must be symmetric with a positive diagonal".into()));
        }
        if !(cov[0][0] * cov[1][1] - cov[0][1] * cov[0][1] > 0.0) {
            return Err(FgfError::Precondition("Σ must have positive determinant".into()));
        }
        Ok(Self { cov, c })
    }

    pub fn det(&self) -> f64 {
        self.cov[0][0] * self.cov[1][1] - self.cov[0][1] * self.cov[1][0]
    }

    /// M = Σ⁻¹.
    pub fn precision(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        [
            [self.cov[1][1] / d, -self.cov[0][1] / d],
            [-self.cov[1][0] / d, self.cov[0][0] / d],
        ]
    }

    /// Δᵢ = Σⱼ cⱼmᵢⱼ.
    pub fn deltas(&self) -> [f64; 2] {
        let m = self.precision();
        [0, 1].map(|i| m[i][0] * self.c[0] + m[i][1] * self.c[1])
    }

    /// P(X₁ ≥ c₁, X₂ ≥ c₂) by quadrature.
    pub fn orthant(&self, tol: Tol) -> Result<f64> {
        let (s1, s2) = (self.cov[0][0].sqrt(), self.cov[1][1].sqrt());
        orthant_probability(s1, s2, self.cov[0][1] / (s1 * s2), self.c[0], self.c[1], tol)
    }
}

/// (Δ₁Δ₂)⁻¹ √det M/(2π) exp(−½cᵀMc), an upper bound for the orthant
/// probability when both Δᵢ are positive.
pub fn savage_bound(spec: &BivariateGaussianSpec) -> Result<f64> {
    let [d1, d2] = spec.deltas();
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(FgfError::Precondition(format!(
            "Savage's bound needs Δ₁, Δ₂ > 0, got Δ = ({d1}, {d2})"
        )));
    }
    let m = spec.precision();
    let c = spec.c;
    let q = c[0] * (m[0][0] * c[0] + m[0][1] * c[1]) + c[1] * (m[1][0] * c[0] + m[1][1] * c[1]);
    let det_m = 1.0 / spec.det();
    Ok(det_m.sqrt() / (2.0 * PI * d1 * d2) * (-0.5 * q).exp())
}

/// e^{−x²/(2σ²)} ≥ P(N(0, σ²) > x).
pub fn gaussian_tail_bound(x: f64, sigma: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(FgfError::Domain {
            name: "x",
            value: x,
            range: "[0, ∞)",
        });
    }
    if !(sigma > 0.0) {
        return Err(FgfError::Domain {
            name: "sigma",
            value: sigma,
            range: "(0, ∞)",
        });
    }
    Ok((-x * x / (2.0 * sigma * sigma)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HStar {
    pub h: HurstParam,
    /// −κ/log‖x−y‖ lay below every grid element; `h` is then the smallest.
    pub below_grid: bool,
}

/// [−κ/log‖x−y‖]_S: the largest element of S_{H,H̄} not exceeding the target.
pub fn h_star(x: &[f64], y: &[f64], hurst: HurstParam, hbar: HurstParam, kappa: f64) -> Result<HStar> {
    if x.len() != y.len() {
        return Err(FgfError::Precondition("points of different dimension".into()));
    }
    let r = norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
    if !(r > 0.0 && r < 1.0) {
        return Err(FgfError::Precondition(format!("need 0 < ‖x−y‖ < 1, got {r}")));
    }
    let s = hurst_grid_s(hurst, hbar)?;
    let target = -kappa / r.ln();
    // S is descending, so the first element not above the target is the floor
    match s.iter().find(|h| h.value() <= target) {
        Some(&h) => Ok(HStar { h, below_grid: false }),
        None => s
            .last()
            .map(|&h| HStar { h, below_grid: true })
            .ok_or_else(|| FgfError::Precondition(format!("S grid is empty for H = {hurst}, H̄ = {hbar}"))),
    }
}

/// β(δ, ε) = 1 − 2δ(1 + 1/(1 − e^{−κ/2})) − ε/(γ(1 − e^{−κ/2})).
pub fn beta_coeff(delta: f64, epsilon: f64, kappa: f64, gamma: f64) -> Result<f64> {
    if !(kappa > 0.0 && gamma > 0.0) {
        return Err(FgfError::Precondition("β needs κ > 0 and γ > 0".into()));
    }
    let q = -(-kappa / 2.0).exp_m1();
    Ok(1.0 - 2.0 * delta * (1.0 + 1.0 / q) - epsilon / (gamma * q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub h: f64,
    pub r: f64,
    pub eta: f64,
    pub envelope: f64,
}

impl EtaPoint {
    /// Smallest of η and envelope − η; nonnegative when the envelope bound holds.
    pub fn margin(&self) -> f64 {
        self.eta.min(self.envelope - self.eta)
    }
}

/// η(h, r) = log(1/r) − (1 − r^h)/h with its envelope (h/2)log²r for r ≤ 1
/// and h(r − 1 − log r) for r > 1.
pub fn eta_and_envelope(h: f64, r: f64) -> Result<EtaPoint> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(FgfError::Domain {
            name: "h",
            value: h,
            range: "(0, 1]",
        });
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(FgfError::Domain {
            name: "r",
            value: r,
            range: "(0, ∞)",
        });
    }
    let l = r.ln();
    // (1 − r^h)/h = −(e^{hl} − 1)/h
    let eta = em1s(h, l) - l;
    let envelope = if r <= 1.0 { 0.5 * h * l * l } else { h * ((r - 1.0) - l) };
    Ok(EtaPoint { h, r, eta, envelope })
}

/// π^{(d+1)/2} Γ(h+½) / (Γ(h+d/2)·h·Γ(2h)·sin(hπ)).
pub fn riesz_closed_form(h: f64, d: usize) -> f64 {
    let k = d as f64;
    PI.powf((k + 1.0) / 2.0) * gamma_pos(h + 0.5) / (gamma_pos(h + k / 2.0) * h * gamma_pos(2.0 * h) * (h * PI).sin())
}

/// ∫₀^∞ 2(1 − cos u)u^{−2h−1}du: whole periods up to 2πK by quadrature, the
/// rest from the non-oscillating part 2∫u^{−p} and an asymptotic series for
/// the cosine tail.
fn radial_riesz(h: f64, tol: Tol) -> Result<(f64, f64)> {
    const PERIODS: usize = 256;
    let p = 2.0 * h + 1.0;
    let f = |u: f64| {
        let s = (0.5 * u).sin();
        4.0 * s * s * u.powf(-p)
    };
    let pts: Vec<f64> = (0..=PERIODS).map(|j| 2.0 * PI * j as f64).collect();
    let head = integrate_fn(f, &pts, tol)?;
    let x = pts[PERIODS];
    // ∫_X^∞ cos u·u^{−p}du at X ∈ 2πℕ: pX^{−p−1} − p(p+1)(p+2)X^{−p−3} + …
    let cos_tail = p * x.powf(-p - 1.0) - p * (p + 1.0) * (p + 2.0) * x.powf(-p - 3.0);
    let tail = 2.0 * x.powf(1.0 - p) / (p - 1.0) - 2.0 * cos_tail;
    let next = p * (p + 1.0) * (p + 2.0) * (p + 3.0) * (p + 4.0) * x.powf(-p - 5.0);
    Ok((head.value + tail, head.error + 2.0 * next))
}

/// Numerical ∫_{ℝ^d} |1 − e^{−iξ·e₁}|²/‖ξ‖^{2h+d} dξ next to its closed form,
/// for d = 1 (directly) and d = 2 (radial reduction); relative tolerance 1e-4.
pub fn riesz_identity_check(h: f64, d: usize) -> Result<Entry> {
    if !(h > 0.0 && h < 0.5) {
        return Err(FgfError::Domain {
            name: "h",
            value: h,
            range: "(0, 1/2)",
        });
    }
    let tol = Tol::new(1e-13, 1e-11);
    let (radial, _) = radial_riesz(h, tol)?;
    let value = match d {
        // both half-lines
        1 => 2.0 * radial,
        // ∫₀^{2π}|cos φ|^{2h}dφ · ∫₀^∞2(1−cos u)u^{−2h−1}du after u = r|cos φ|
        2 => {
            let ang = integrate_fn(|phi: f64| phi.cos().max(0.0).powf(2.0 * h), &[0.0, PI / 2.0], tol)?;
            4.0 * ang.value * radial
        }
        _ => {
            return Err(FgfError::Precondition("the Riesz check covers d = 1 and d = 2".into()));
        }
    };
    let exact = riesz_closed_form(h, d);
    Ok(Entry::info(format!("riesz d={d} h={h} relative gap"), ((value - exact) / exact).abs())
        .against(0.0, 1e-4))
}

/// A random SPD Σ and thresholds with both Δᵢ positive.
pub fn random_savage_instance<R: Rng>(rng: &mut R) -> BivariateGaussianSpec {
    loop {
        let a: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let s00 = a[0] * a[0] + a[1] * a[1] + 0.05;
        let s11 = a[2] * a[2] + a[3] * a[3] + 0.05;
        let s01 = a[0] * a[2] + a[1] * a[3];
        let c = [rng.gen_range(0.2..4.0), rng.gen_range(0.2..4.0)];
        if let Ok(spec) = BivariateGaussianSpec::new([[s00, s01], [s01, s11]], c) {
            let [d1, d2] = spec.deltas();
            if d1 > 0.0 && d2 > 0.0 {
                return spec;
            }
        }
    }
}

/// Counts instances where the bound falls below the orthant probability by
/// more than the oracle error budget 1e-8.
pub fn savage_violations(instances: usize, seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut bad = 0;
    for _ in 0..instances {
        let spec = random_savage_instance(&mut rng);
        let p = spec.orthant(Tol::new(1e-12, 1e-10))?;
        let b = savage_bound(&spec)?;
        worst = worst.min(b - p);
        if b < p - 1e-8 {
            bad += 1;
        }
    }
    Ok((bad, worst))
}

/// Smallest margin of 0 ≤ η ≤ envelope on an n×n grid of h ∈ (0,1] and
/// log-spaced r ∈ (1e-3, 1e3).
pub fn eta_grid_margin(n: usize) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for i in 1..=n {
        let h = i as f64 / n as f64;
        for j in 0..n {
            let r = 10f64.powf(-3.0 + 6.0 * (j as f64 + 0.5) / n as f64);
            worst = worst.min(eta_and_envelope(h, r)?.margin());
        }
    }
    Ok(worst)
}

/// The whole battery of inequality checks as one report.
pub fn bounds_sweep(seed: u64) -> Result<DiagnosticReport> {
    let mut rep = DiagnosticReport::new();
    let (bad, worst) = savage_violations(100, seed)?;
    rep.push(Entry::info("savage violations (100 instances)", bad as f64).against(0.0, 0.0));
    rep.push(Entry::info("savage min(bound - orthant)", worst));
    let id = BivariateGaussianSpec::new([[1.0, 0.0], [0.0, 1.0]], [2.0, 2.0])?;
    rep.push(Entry::info("savage identity c=(2,2)", savage_bound(&id)?).against((-4.0f64).exp() / (8.0 * PI), 1e-15));
    rep.push(Entry::info("orthant identity c=(2,2)", id.orthant(Tol::new(1e-14, 1e-12))?).against(normal_sf(2.0).powi(2), 1e-10));

    let tail_ok = (0..=60).all(|k| {
        let x = 0.1 * k as f64;
        gaussian_tail_bound(x, 1.0).map(|b| b >= normal_sf(x)).unwrap_or(false)
    });
    rep.push(Entry::info("gaussian tail bound dominates Q on [0,6]", tail_ok as u8 as f64).check(tail_ok));

    let margin = eta_grid_margin(100)?;
    rep.push(Entry::info("eta envelope min margin (100x100)", margin).check(margin >= -1e-12));
    let e = eta_and_envelope(1.0, std::f64::consts::E)?;
    rep.push(Entry::info("eta(1, e)", e.eta).against(std::f64::consts::E - 2.0, 1e-12));

    for h in [0.1, 0.2, 0.3, 0.4] {
        rep.push(riesz_identity_check(h, 1)?);
    }
    rep.push(riesz_identity_check(0.25, 2)?);

    let g = gamma_star(1)?;
    rep.push(Entry::info("f(kappa) unimodal on (0,10]", f_kappa_unimodal() as u8 as f64).check(f_kappa_unimodal()));
    rep.push(Entry::info("beta(0,0)", beta_coeff(0.0, 0.0, g.kappa_star, 1.0)?).against(1.0, 0.0));
    Ok(rep)
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
    fn savage_identity_example() {
        let s = BivariateGaussianSpec::new([[1.0, 0.0], [0.0, 1.0]], [2.0, 2.0]).unwrap();
        let b = savage_bound(&s).unwrap();
        assert_relative_eq!(b, 7.29e-4, max_relative = 2e-3);
        let p = s.orthant(Tol::new(1e-14, 1e-12)).unwrap();
        assert_relative_eq!(p, 5.176e-4, max_relative = 1e-3);
        assert!(b >= p);
    }

    #[test]
    fn savage_rejects_negative_delta() {
        // strong positive correlation with very unequal thresholds
        let s = BivariateGaussianSpec::new([[1.0, 0.9], [0.9, 1.0]], [3.0, 0.1]).unwrap();
        assert!(s.deltas()[1] < 0.0);
        assert!(matches!(savage_bound(&s), Err(FgfError::Precondition(_))));
    }

    #[test]
    fn savage_dominates_random_instances() {
        let (bad, worst) = savage_violations(100, 2024).unwrap();
        assert_eq!(bad, 0);
        assert!(worst > -1e-8);
    }

    #[test]
    fn savage_decreasing_in_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_savage_instance(&mut rng);
            let at = |t: f64| savage_bound(&BivariateGaussianSpec { c: s.c.map(|v| v * t), ..s }).unwrap();
            assert!((1..20).all(|k| at(1.0 + 0.1 * k as f64) < at(1.0 + 0.1 * (k - 1) as f64)));
        }
    }

    #[test]
    fn tail_bound_examples() {
        assert_eq!(gaussian_tail_bound(0.0, 1.0).unwrap(), 1.0);
        let b = gaussian_tail_bound(6.0, 2.0).unwrap();
        assert_relative_eq!(b, (-4.5f64).exp(), max_relative = 1e-15);
        assert!(b >= normal_sf(3.0));
        assert!(gaussian_tail_bound(-1.0, 1.0).is_err());
    }

    #[test]
    fn h_star_on_grid_target() {
        let (hh, hb, kappa) = (hp(0.05), hp(0.3), 1.037);
        for s in hurst_grid_s(hh, hb).unwrap() {
            let r = (-kappa / s.value()).exp();
            let got = h_star(&[0.0], &[r], hh, hb, kappa).unwrap();
            assert!((got.h.value() - s.value()).abs() < 1e-12);
            assert!(!got.below_grid);
        }
    }

    #[test]
    fn h_star_rejects_bad_pairs() {
        assert!(h_star(&[0.3], &[0.3], hp(0.05), hp(0.3), 1.0).is_err());
        assert!(h_star(&[0.0], &[1.5], hp(0.05), hp(0.3), 1.0).is_err());
        let low = h_star(&[0.0], &[1e-6], hp(0.05), hp(0.3), 1.0).unwrap();
        assert!(low.below_grid);
    }

    #[test]
    fn h_star_bracket_in_regime() {
        let (hh, hb) = (hp(0.02), hp(0.3));
        let s = hurst_grid_s(hh, hb).unwrap();
        let (lo, hi) = (s.last().unwrap().value(), s[0].value());
        let k = gamma_star(1).unwrap().kappa_star;
        for i in 0..200 {
            let target = lo + (hi - lo) * i as f64 / 199.0;
            let r = (-k / target).exp();
            let h = h_star(&[0.0], &[r], hh, hb, k).unwrap().h.value();
            let v = r.powf(h);
            assert!(v >= (-k).exp() * (1.0 - 1e-12) && v <= (-k / 2.0).exp() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta_coeff(0.0, 0.0, 1.037, 1.0).unwrap(), 1.0);
        let k = 1.037;
        let q = 1.0 - (-k / 2.0f64).exp();
        let dbar = 0.2;
        // ε/(γq) ≤ δ̄/16 and 2δ(1 + 1/q) ≤ δ̄/16
        let eps = dbar / 16.0 * q;
        let delta = dbar / 32.0 / (1.0 + 1.0 / q);
        assert!(beta_coeff(delta, eps, k, 1.0).unwrap() >= 1.0 - dbar / 8.0 - 1e-15);
    }

    #[test]
    fn eta_examples() {
        let e = eta_and_envelope(1.0, std::f64::consts::E).unwrap();
        assert!((e.eta - (std::f64::consts::E - 2.0)).abs() < 1e-12);
        assert!((e.envelope - e.eta).abs() < 1e-12);
        let q = eta_and_envelope(0.5, 0.25).unwrap();
        assert_relative_eq!(q.eta, 4f64.ln() - 1.0, max_relative = 1e-14);
        assert_relative_eq!(q.envelope, 0.25 * 4f64.ln().powi(2), max_relative = 1e-14);
        assert_eq!(eta_and_envelope(0.3, 1.0).unwrap().eta, 0.0);
        assert!(eta_grid_margin(100).unwrap() >= -1e-12);
    }

    #[test]
    fn riesz_identity_d1_sweep() {
        for h in [0.1, 0.2, 0.25, 0.3, 0.4] {
            let e = riesz_identity_check(h, 1).unwrap();
            assert!(e.value < 1e-4, "h={h}: {}", e.value);
        }
    }

    #[test]
    fn riesz_identity_d2() {
        for h in [0.15, 0.35] {
            assert!(riesz_identity_check(h, 2).unwrap().value < 1e-4);
        }
        assert!(riesz_closed_form(0.2, 2) > 0.0);
    }

    proptest! {
        #[test]
        fn beta_decreasing(d in 0.0f64..0.5, e in 0.0f64..1.0, k in 0.1f64..5.0, g in 0.1f64..3.0) {
            let b = beta_coeff(d, e, k, g).unwrap();
            prop_assert!(beta_coeff(d + 0.01, e, k, g).unwrap() < b);
            prop_assert!(beta_coeff(d, e + 0.01, k, g).unwrap() < b);
        }

        #[test]
        fn h_star_is_grid_floor(y in 0.001f64..0.99, k in 0.2f64..3.0) {
            let (hh, hb) = (hp(0.03), hp(0.35));
            let got = h_star(&[0.0], &[y], hh, hb, k).unwrap();
            let target = -k / y.ln();
            if !got.below_grid {
                prop_assert!(got.h.value() <= target);
                let s = hurst_grid_s(hh, hb).unwrap();
                prop_assert!(!s.iter().any(|v| v.value() > got.h.value() && v.value() <= target));
            }
        }

        #[test]
        fn tail_bound_monotone(x in 0.0f64..10.0, dx in 0.001f64..1.0) {
            prop_assert!(gaussian_tail_bound(x + dx, 1.3).unwrap() < gaussian_tail_bound(x, 1.3).unwrap());
        }
    }
}
