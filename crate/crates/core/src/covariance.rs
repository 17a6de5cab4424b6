//! Cross-covariances of the base fractional fields B^H and of the normalized
//! fields X^H = Γ(H)^{1/2}(B^H − ∫B^H(u)ψ(u, ·)du), plus the log-correlated
//! limit kernel.
//!
//! With σ = H + h and l^σ(z) = (1 − ‖z‖^σ)/σ, every model gives
//!
//! cov(X^H(x), X^h(y)) = C_{H,h}·(l^σ(x − y) + g_{H,h}(x, y))
//!
//! where g collects the ψ-averages of l^σ (and, for the Mandelbrot–van Ness
//! pair, of the odd part sgn(z)|z|^σ). The parts of cov(B^H, B^h) that only
//! depend on one of the two points cancel in the normalization.

use crate::constants::{c_hh, cd_hh, mvn_constants, HurstParam};
use crate::error::{FgfError, Result};
use crate::kernels::{NormalizingKernel, Profile};
use crate::quad::{Estimate, Tol};
use crate::special::gamma_pos;
use serde::{Deserialize, Serialize};
use std::ops::Deref;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Mandelbrot–van Ness moving averages with one Brownian motion (1-D).
    MvN1D,
    /// Two-sided well-balanced moving averages (1-D).
    WellBalanced1D,
    /// Fractional Brownian fields from one white noise on ℝ^d.
    Fbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub kind: ModelKind,
    pub dim: usize,
}

impl CovarianceModel {
    pub fn mvn() -> Self {
        Self {
            kind: ModelKind::MvN1D,
            dim: 1,
        }
    }

    pub fn well_balanced() -> Self {
        Self {
            kind: ModelKind::WellBalanced1D,
            dim: 1,
        }
    }

    pub fn fbf(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(FgfError::Precondition("dimension must be at least 1".into()));
        }
        Ok(Self {
            kind: ModelKind::Fbf,
            dim,
        })
    }

    /// Largest admissible Hurst index (exclusive).
    pub fn hurst_cap(&self) -> f64 {
        match self.kind {
            ModelKind::MvN1D => 1.0,
            _ => 0.5,
        }
    }

    /// Rejects Hurst pairs outside the model's range; the MvN pair also
    /// excludes H + h = 1 where its constants blow up.
    pub fn check_pair(&self, h1: HurstParam, h2: HurstParam) -> Result<()> {
        let cap = self.hurst_cap();
        for h in [h1, h2] {
            if h.value() >= cap {
                return Err(FgfError::Domain {
                    name: "H",
                    value: h.value(),
                    range: if cap == 1.0 { "(0, 1)" } else { "(0, 1/2)" },
                });
            }
        }
        if self.kind == ModelKind::MvN1D && (h1.value() + h2.value() - 1.0).abs() < 1e-12 {
            return Err(FgfError::Singular(format!("H + h = 1 for H = {h1}, h = {h2}")));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(FgfError::Precondition(format!(
                "point has dimension {}, model has {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// A finite point of ℝ^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.iter().any(|c| !c.is_finite()) {
            return Err(FgfError::Precondition("points need finite coordinates".into()));
        }
        Ok(Self(coords))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = FgfError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

/// A box [lo, hi] ⊂ ℝ^d, optionally minus the open ball of radius
/// `exclude` around the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lo: Vec<f64>,
    hi: Vec<f64>,
    #[serde(default)]
    exclude: f64,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, exclude: f64) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(FgfError::BadDomain("lo and hi must have the same nonzero length".into()));
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) || lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(FgfError::BadDomain("box must be bounded with lo ≤ hi".into()));
        }
        if !(exclude >= 0.0) {
            return Err(FgfError::BadDomain("excluded radius must be nonnegative".into()));
        }
        let d = Self { lo, hi, exclude };
        if d.corners().iter().all(|c| norm(c) < exclude) {
            return Err(FgfError::BadDomain("excluded ball swallows the box".into()));
        }
        Ok(d)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| v >= a && v <= b)
            && norm(x) >= self.exclude
    }

    /// inf over D of ‖x‖.
    pub fn origin_gap(&self) -> f64 {
        let nearest: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| 0f64.clamp(*a, *b)).collect();
        norm(&nearest).max(self.exclude)
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|m| (0..d).map(|k| if m >> k & 1 == 1 { self.hi[k] } else { self.lo[k] }).collect())
            .collect()
    }

    /// Tensor grid with `per_axis` equispaced values per axis (endpoints
    /// included) intersected with D, plus the corners that lie in D.
    pub fn sample_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let n = per_axis.max(2);
        let axis = |k: usize| -> Vec<f64> {
            (0..n).map(|i| self.lo[k] + (self.hi[k] - self.lo[k]) * i as f64 / (n - 1) as f64).collect()
        };
        let axes: Vec<Vec<f64>> = (0..d).map(axis).collect();
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for ax in &axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    ax.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        out.retain(|p| self.contains(p));
        for c in self.corners() {
            if self.contains(&c) && !out.contains(&c) {
                out.push(c);
            }
        }
        out.dedup();
        out
    }
}

/// cov(B^H(x), B^h(y)) for the chosen base-field model.
pub fn cov_b(x: &[f64], y: &[f64], hurst: HurstParam, h: HurstParam, model: &CovarianceModel) -> Result<f64> {
    model.check_pair(hurst, h)?;
    model.check_point(x)?;
    model.check_point(y)?;
    let s = hurst.value() + h.value();
    let p = |z: &[f64]| norm(z).powf(s);
    let even = p(x) + p(y) - p(&diff(x, y));
    match model.kind {
        ModelKind::MvN1D => {
            let k = mvn_constants(h, hurst)?;
            let f = |z: f64| z.signum() * z.abs().powf(s);
            Ok(k.b * even - k.o * (f(y[0]) - f(x[0]) + f(x[0] - y[0])))
        }
        ModelKind::WellBalanced1D => Ok(cd_hh(hurst, h, 1)? * even),
        ModelKind::Fbf => Ok(cd_hh(hurst, h, model.dim)? * even),
    }
}

/// Evaluates cov(X^H(x), X^h(y)) for a fixed Hurst pair and kernel, keeping
/// the Γ-dependent constants out of the per-entry work.
#[derive(Debug, Clone)]
pub struct CrossCovariance<'a> {
    psi: &'a NormalizingKernel,
    sigma: f64,
    c: f64,
    /// o/(bσ) for the MvN pair, 0 otherwise.
    odd: f64,
}

impl<'a> CrossCovariance<'a> {
    pub fn new(hurst: HurstParam, h: HurstParam, psi: &'a NormalizingKernel, model: &CovarianceModel) -> Result<Self> {
        model.check_pair(hurst, h)?;
        if psi.dim() != model.dim {
            return Err(FgfError::Precondition("kernel and model dimensions differ".into()));
        }
        let sigma = hurst.value() + h.value();
        let odd = match model.kind {
            ModelKind::MvN1D => {
                let k = mvn_constants(h, hurst)?;
                k.o / (k.b * sigma)
            }
            _ => 0.0,
        };
        Ok(Self {
            psi,
            sigma,
            c: c_hh(hurst, h, model)?,
            odd,
        })
    }

    /// C_{H,h}.
    pub fn prefactor(&self) -> f64 {
        self.c
    }

    /// l^σ(x − y) = (1 − ‖x−y‖^σ)/σ.
    pub fn ratio(&self, x: &[f64], y: &[f64]) -> f64 {
        Profile::L(self.sigma).eval(&diff(x, y))
    }

    /// g_{H,h}(x, y).
    pub fn g(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let l = Profile::L(self.sigma);
        let psi = self.psi;
        let mut g = psi.double(l, x, y)? - psi.single(l, x, y)? - psi.single(l, y, x)?;
        if self.odd != 0.0 {
            let f = Profile::Odd(self.sigma);
            let d_odd = f.eval1(x[0] - y[0]) - psi.single(f, x, y)? + psi.single(f, y, x)? + psi.double(f, x, y)?;
            g -= self.odd * d_odd;
        }
        Ok(g)
    }

    pub fn cov(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.c * (self.ratio(x, y) + self.g(x, y)?))
    }
}

/// g_{H,h}(x, y) in the decomposition cov = C·(l^σ(x−y) + g).
pub fn g_hh(x: &[f64], y: &[f64], hurst: HurstParam, h: HurstParam, psi: &NormalizingKernel, model: &CovarianceModel) -> Result<f64> {
    CrossCovariance::new(hurst, h, psi, model)?.g(x, y)
}

/// cov(X^H(x), X^h(y)) through the C·(l + g) decomposition.
pub fn cov_x(x: &[f64], y: &[f64], hurst: HurstParam, h: HurstParam, psi: &NormalizingKernel, model: &CovarianceModel) -> Result<f64> {
    model.check_point(x)?;
    model.check_point(y)?;
    CrossCovariance::new(hurst, h, psi, model)?.cov(x, y)
}

/// cov(X^H(x), X^h(y)) from its definition: the four ψ-averages of
/// cov(B^H, B^h) computed by quadrature, times Γ(H)^{1/2}Γ(h)^{1/2}.
/// Slow; meant for cross-checking [`cov_x`].
pub fn cov_x_direct(
    x: &[f64],
    y: &[f64],
    hurst: HurstParam,
    h: HurstParam,
    psi: &NormalizingKernel,
    model: &CovarianceModel,
    tol: Tol,
) -> Result<Estimate> {
    model.check_pair(hurst, h)?;
    let cb = |u: &[f64], v: &[f64]| cov_b(u, v, hurst, h, model).unwrap_or(f64::NAN);
    let origin = vec![0.0; x.len()];
    let inner_tol = Tol::new(tol.abs * 0.1, tol.rel * 0.1);

    let l1 = cb(x, y);
    let l2 = psi.average(&|v| cb(x, v), y, &[x.to_vec(), origin.clone()], tol)?;
    let l3 = psi.average(&|u| cb(u, y), x, &[y.to_vec(), origin.clone()], tol)?;
    let err = std::cell::Cell::new(None::<FgfError>);
    let inner = |u: &[f64]| match psi.average(&|v| cb(u, v), y, &[u.to_vec(), origin.clone()], inner_tol) {
        Ok(e) => e.value,
        Err(e) => {
            err.set(Some(e));
            f64::NAN
        }
    };
    let l4 = psi.average(&inner, x, std::slice::from_ref(&origin), tol)?;
    if let Some(e) = err.take() {
        return Err(e);
    }
    let scale = (gamma_pos(hurst.value()) * gamma_pos(h.value())).sqrt();
    Ok(Estimate {
        value: scale * (l1 - l2.value - l3.value + l4.value),
        error: scale * (l2.error + l3.error + l4.error),
        evals: l2.evals + l3.evals + l4.evals,
    })
}

/// g₀(x, y) = ∫log‖x−v‖ψ(v,y)dv + ∫log‖u−y‖ψ(u,x)du − ∬log‖u−v‖ψψ.
pub fn limit_g(x: &[f64], y: &[f64], psi: &NormalizingKernel) -> Result<f64> {
    let l = Profile::L(0.0);
    Ok(psi.double(l, x, y)? - psi.single(l, x, y)? - psi.single(l, y, x)?)
}

/// K(x, y) = log(1/‖x−y‖) + g₀(x, y), the covariance of the H → 0 limit.
pub fn limit_kernel(x: &[f64], y: &[f64], psi: &NormalizingKernel) -> Result<f64> {
    if x == y {
        return Err(FgfError::Precondition("the limit kernel is singular on the diagonal".into()));
    }
    Ok(Profile::L(0.0).eval(&diff(x, y)) + limit_g(x, y, psi)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_convolution_kernel, moving_average_kernel, nr_kernel, Theta};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hp(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn cov_b_variance_is_power() {
        for model in [CovarianceModel::mvn(), CovarianceModel::well_balanced()] {
            for &h in &[0.05, 0.3, 0.45] {
                let v = cov_b(&[1.7], &[1.7], hp(h), hp(h), &model).unwrap();
                assert_relative_eq!(v, 1.7f64.powf(2.0 * h), max_relative = 1e-12);
            }
        }
        let m = CovarianceModel::fbf(3).unwrap();
        let x = [0.3, -0.4, 1.2];
        let v = cov_b(&x, &x, hp(0.2), hp(0.2), &m).unwrap();
        assert_relative_eq!(v, norm(&x).powf(0.4), max_relative = 1e-12);
    }

    #[test]
    fn mvn_cross_values() {
        // frozen from direct quadrature of the moving-average representation
        let m = CovarianceModel::mvn();
        let cases = [
            (0.4, 0.2, 1.0, 2.0, 0.580865),
            (0.2, 0.4, 1.0, 2.0, 0.774536),
            (0.3, 0.3, 1.0, 2.0, 0.757858),
            (0.2, 0.4, -1.0, 2.0, 0.143979),
            (0.4, 0.2, 1.5, -0.7, 0.118105),
        ];
        for (a, b, t, s, want) in cases {
            let v = cov_b(&[t], &[s], hp(a), hp(b), &m).unwrap();
            assert!((v - want).abs() < 2e-6, "H={a} h={b} t={t} s={s}: {v} vs {want}");
        }
    }

    #[test]
    fn mvn_rejects_unit_sum() {
        let m = CovarianceModel::mvn();
        assert!(matches!(cov_b(&[1.0], &[2.0], hp(0.7), hp(0.3), &m), Err(FgfError::Singular(_))));
    }

    #[test]
    fn two_assemblies_agree() {
        let nr = nr_kernel(0.1, 1.0).unwrap();
        let ma = moving_average_kernel(0.25, 0.5, 2.0).unwrap();
        let tol = Tol::new(1e-10, 1e-10);
        let pairs = [(0.3, 0.3), (0.1, 0.35), (0.45, 0.2)];
        for model in [CovarianceModel::mvn(), CovarianceModel::well_balanced()] {
            for &(a, b) in &pairs {
                for (psi, x, y) in [(&nr, 0.3, 0.8), (&nr, 1.0, 1.0), (&ma, 0.7, 1.9)] {
                    let fast = cov_x(&[x], &[y], hp(a), hp(b), psi, &model).unwrap();
                    let slow = cov_x_direct(&[x], &[y], hp(a), hp(b), psi, &model, tol).unwrap();
                    assert_relative_eq!(fast, slow.value, max_relative = 1e-6, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn two_assemblies_agree_generic_kernel() {
        let psi = make_convolution_kernel(Theta::gaussian(1, 0.2).unwrap(), Domain::interval(0.5, 1.5).unwrap()).unwrap();
        let model = CovarianceModel::fbf(1).unwrap();
        let fast = cov_x(&[0.7], &[1.2], hp(0.25), hp(0.35), &psi, &model).unwrap();
        let slow = cov_x_direct(&[0.7], &[1.2], hp(0.25), hp(0.35), &psi, &model, Tol::new(1e-9, 1e-9)).unwrap();
        assert_relative_eq!(fast, slow.value, max_relative = 1e-6);
    }

    #[test]
    fn nr_diagonal_limit() {
        // g₀(x, x) = log x − 1/2 for ψ(u,t) = t⁻¹1_{[0,t]}
        let psi = nr_kernel(0.01, 2.0).unwrap();
        for &x in &[0.05, 0.5, 1.0, 1.7] {
            assert_relative_eq!(limit_g(&[x], &[x], &psi).unwrap(), x.ln() - 0.5, max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn variance_decomposition() {
        let psi = nr_kernel(0.1, 1.0).unwrap();
        let m = CovarianceModel::mvn();
        let h = hp(0.2);
        let cc = CrossCovariance::new(h, h, &psi, &m).unwrap();
        let v = cov_x(&[0.6], &[0.6], h, h, &psi, &m).unwrap();
        assert_relative_eq!(v, cc.prefactor() * (1.0 / 0.4 + cc.g(&[0.6], &[0.6]).unwrap()), max_relative = 1e-13);
        assert_relative_eq!(cc.prefactor(), libm::tgamma(1.2), max_relative = 1e-12);
    }

    #[test]
    fn small_hurst_approaches_limit() {
        let psi = nr_kernel(0.1, 1.0).unwrap();
        let m = CovarianceModel::well_balanced();
        let (x, y) = ([0.3], [0.7]);
        let k = limit_kernel(&x, &y, &psi).unwrap();
        let mut prev = f64::INFINITY;
        for &h in &[1e-2, 1e-3, 1e-4] {
            let err = (cov_x(&x, &y, hp(h), hp(h), &psi, &m).unwrap() - k).abs();
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn limit_kernel_rejects_diagonal() {
        let psi = nr_kernel(0.1, 1.0).unwrap();
        assert!(limit_kernel(&[0.5], &[0.5], &psi).is_err());
    }

    #[test]
    fn domain_grid_and_gap() {
        let d = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0], 0.25).unwrap();
        assert_eq!(d.origin_gap(), 0.25);
        let g = d.sample_grid(5);
        assert!(g.iter().all(|p| d.contains(p)));
        assert_eq!(g.len(), 24);
        assert_eq!(Domain::interval(0.5, 2.0).unwrap().origin_gap(), 0.5);
        assert!(Domain::interval(2.0, 1.0).is_err());
    }

    #[test]
    fn point_rejects_nan() {
        assert!(Point::new(vec![1.0, f64::NAN]).is_err());
        let p: Point = serde_json::from_str("[3.0, 4.0]").unwrap();
        assert_eq!(p.norm(), 5.0);
    }

    proptest! {
        #[test]
        fn cov_b_symmetry(a in 0.01f64..0.99, b in 0.01f64..0.99, x in -3.0f64..3.0, y in -3.0f64..3.0) {
            prop_assume!((a + b - 1.0).abs() > 1e-3);
            let m = CovarianceModel::mvn();
            let l = cov_b(&[x], &[y], hp(a), hp(b), &m).unwrap();
            let r = cov_b(&[y], &[x], hp(b), hp(a), &m).unwrap();
            prop_assert!((l - r).abs() <= 1e-12 * (1.0 + l.abs()));
        }

        #[test]
        fn cov_x_symmetry(a in 0.02f64..0.48, b in 0.02f64..0.48, x in 0.1f64..1.0, y in 0.1f64..1.0) {
            let psi = nr_kernel(0.1, 1.0).unwrap();
            for m in [CovarianceModel::mvn(), CovarianceModel::well_balanced()] {
                let l = cov_x(&[x], &[y], hp(a), hp(b), &psi, &m).unwrap();
                let r = cov_x(&[y], &[x], hp(b), hp(a), &psi, &m).unwrap();
                prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()), "{l} vs {r}");
            }
        }

        #[test]
        fn fbf_pair_cauchy_schwarz(a in 0.02f64..0.48, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, y0 in -2.0f64..2.0, y1 in -2.0f64..2.0) {
            let m = CovarianceModel::fbf(2).unwrap();
            let (x, y) = ([x0, x1], [y0, y1]);
            let h = hp(a);
            let c = cov_b(&x, &y, h, h, &m).unwrap();
            let vx = cov_b(&x, &x, h, h, &m).unwrap();
            let vy = cov_b(&y, &y, h, h, &m).unwrap();
            prop_assert!(c * c <= vx * vy * (1.0 + 1e-12) + 1e-15);
        }
    }
}
