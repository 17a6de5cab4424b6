//! Normalizing kernels ψ(x, y): a probability density in x for each location y.
//!
//! Three shapes are supported. `Interval` covers every 1-D kernel that is a
//! uniform density on an interval whose ends move affinely with y (the
//! t⁻¹1_{[0,t]} kernel and box moving averages); its averages of the
//! profiles in [`Profile`] have closed forms. `Convolution` and
//! `SelfSimilar` wrap an arbitrary density θ and are integrated numerically.

use crate::covariance::Domain;
use crate::error::{FgfError, Result};
use crate::quad::{self, Estimate, Node, Tol};
use crate::special::{ball_volume, em1s, normal_sf};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Radial or odd functions of the difference z = x − u that get averaged
/// against ψ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// l^s(z) = (1 − ‖z‖^s)/s, and −log‖z‖ at s = 0.
    L(f64),
    /// ‖z‖^p with p > −d; p = 0 is the constant 1.
    Power(f64),
    /// sgn(z)|z|^σ, 1-D only.
    Odd(f64),
    /// (log₋‖z‖)² with log₋ = min(log, 0).
    LogNegSq,
}

impl Profile {
    pub fn is_odd(&self) -> bool {
        matches!(self, Profile::Odd(_))
    }

    /// Radii where the profile is not smooth (besides 0).
    pub fn kinks(&self) -> &'static [f64] {
        match self {
            Profile::LogNegSq => &[1.0],
            _ => &[],
        }
    }

    /// Value at a 1-D signed difference.
    pub fn eval1(&self, z: f64) -> f64 {
        match *self {
            Profile::L(s) => {
                if z == 0.0 {
                    if s > 0.0 {
                        1.0 / s
                    } else {
                        f64::INFINITY
                    }
                } else {
                    -em1s(s, z.abs().ln())
                }
            }
            Profile::Power(p) => {
                if p == 0.0 {
                    1.0
                } else {
                    z.abs().powf(p)
                }
            }
            Profile::Odd(s) => z.signum() * z.abs().powf(s) * f64::from(u8::from(z != 0.0)),
            Profile::LogNegSq => {
                let l = z.abs().ln();
                if l < 0.0 {
                    l * l
                } else {
                    0.0
                }
            }
        }
    }

    /// Value at a difference vector.
    pub fn eval(&self, z: &[f64]) -> f64 {
        if z.len() == 1 {
            return self.eval1(z[0]);
        }
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        match self {
            Profile::Odd(_) => f64::NAN,
            _ => self.eval1(r),
        }
    }

    /// First antiderivative Φ₁ with Φ₁(0) = 0 (1-D).
    pub fn phi1(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        let a = z.abs();
        match *self {
            Profile::L(s) => z * (1.0 - em1s(s, a.ln())) / (s + 1.0),
            Profile::Power(p) => z.signum() * a.powf(p + 1.0) / (p + 1.0),
            Profile::Odd(s) => a.powf(s + 1.0) / (s + 1.0),
            Profile::LogNegSq => {
                if a < 1.0 {
                    let l = a.ln();
                    z * (l * l - 2.0 * l + 2.0)
                } else {
                    2.0 * z.signum()
                }
            }
        }
    }

    /// Second antiderivative Φ₂ with Φ₂(0) = 0 (1-D).
    pub fn phi2(&self, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        let a = z.abs();
        match *self {
            Profile::L(s) => z * z * ((3.0 + s) / 2.0 - em1s(s, a.ln())) / ((s + 1.0) * (s + 2.0)),
            Profile::Power(p) => a.powf(p + 2.0) / ((p + 1.0) * (p + 2.0)),
            Profile::Odd(s) => z.signum() * a.powf(s + 2.0) / ((s + 1.0) * (s + 2.0)),
            Profile::LogNegSq => {
                if a < 1.0 {
                    let l = a.ln();
                    a * a * (0.5 * l * l - 1.5 * l + 1.75)
                } else {
                    1.75 + 2.0 * (a - 1.0)
                }
            }
        }
    }
}

/// Where θ (or ψ(·, y)) can be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// The whole real line (1-D only); tails are integrated to infinity.
    Line,
}

impl Support {
    fn dim(&self) -> Option<usize> {
        match self {
            Support::Box { lo, .. } => Some(lo.len()),
            Support::Ball { center, .. } => Some(center.len()),
            Support::Line => None,
        }
    }

    /// Bounds of coordinate `k` given the first k coordinates of a point.
    fn slice(&self, k: usize, prefix: &[f64]) -> (f64, f64) {
        match self {
            Support::Box { lo, hi } => (lo[k], hi[k]),
            Support::Ball { center, radius } => {
                let used: f64 = prefix.iter().zip(center).map(|(u, c)| (u - c) * (u - c)).sum();
                let rest = (radius * radius - used).max(0.0).sqrt();
                (center[k] - rest, center[k] + rest)
            }
            Support::Line => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn map_affine(&self, scale: f64, shift: &[f64]) -> Support {
        match self {
            Support::Box { lo, hi } => {
                let (a, b): (Vec<f64>, Vec<f64>) = lo
                    .iter()
                    .zip(hi)
                    .zip(shift)
                    .map(|((l, h), s)| {
                        let (x, y) = (s + scale * l, s + scale * h);
                        (x.min(y), x.max(y))
                    })
                    .unzip();
                Support::Box { lo: a, hi: b }
            }
            Support::Ball { center, radius } => Support::Ball {
                center: center.iter().zip(shift).map(|(c, s)| s + scale * c).collect(),
                radius: radius * scale.abs(),
            },
            Support::Line => Support::Line,
        }
    }
}

type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A probability density θ on ℝ^d with a declared support.
#[derive(Clone)]
pub struct Theta {
    name: String,
    dim: usize,
    support: Support,
    f: DensityFn,
    /// θ = |A|⁻¹1_A for an interval A = [lo, hi] (1-D); enables closed forms.
    uniform_interval: Option<(f64, f64)>,
    /// Interior points where a 1-D θ is not smooth.
    kinks: Vec<f64>,
}

impl fmt::Debug for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Theta")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("support", &self.support)
            .finish()
    }
}

impl Theta {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        support: Support,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        match support.dim() {
            Some(d) if d != dim => {
                return Err(FgfError::Precondition(format!(
                    "support has dimension {d}, density has {dim}"
                )))
            }
            None if dim != 1 => {
                return Err(FgfError::Precondition("unbounded support is only available in 1-D".into()))
            }
            _ => {}
        }
        Ok(Self {
            name: name.into(),
            dim,
            support,
            f: Arc::new(f),
            uniform_interval: None,
            kinks: vec![],
        })
    }

    /// |A|⁻¹1_A for the box A = [lo, hi].
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(FgfError::BadDomain("uniform box needs lo < hi on every axis".into()));
        }
        let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        let (l2, h2) = (lo.clone(), hi.clone());
        let dim = lo.len();
        let mut t = Self::new("uniform-box", dim, Support::Box { lo: lo.clone(), hi: hi.clone() }, move |x| {
            if x.iter().zip(l2.iter().zip(&h2)).all(|(v, (a, b))| v >= a && v <= b) {
                1.0 / vol
            } else {
                0.0
            }
        })?;
        if dim == 1 {
            t.uniform_interval = Some((lo[0], hi[0]));
        }
        Ok(t)
    }

    /// |B₁(0)|⁻¹1_{B₁(0)}.
    pub fn unit_ball(dim: usize) -> Result<Self> {
        if dim == 1 {
            return Self::uniform_box(vec![-1.0], vec![1.0]);
        }
        let vol = ball_volume(dim);
        Self::new(
            "unit-ball",
            dim,
            Support::Ball {
                center: vec![0.0; dim],
                radius: 1.0,
            },
            move |x| {
                if x.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    1.0 / vol
                } else {
                    0.0
                }
            },
        )
    }

    /// Isotropic Gaussian bump with standard deviation `sigma`, truncated to
    /// a box whose discarded mass and discarded ‖x‖^{2H₀}-moment (for any
    /// H₀ < ½) are below 1e-8.
    pub fn gaussian(dim: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(FgfError::Domain {
                name: "sigma",
                value: sigma,
                range: "(0, ∞)",
            });
        }
        // union bound over axes: 2d·∫_r^∞ (1 + d·x²)φ_σ(x)dx ≤ 1e-8 (the moment
        // weight ‖x‖^{2H₀} ≤ 1 + ‖x‖² ≤ 1 + d·max x_i²)
        let mut r = 1.0;
        let tail = |r: f64| {
            let q = normal_sf(r);
            let m2 = r * crate::special::normal_pdf(r) + q;
            2.0 * dim as f64 * (q + dim as f64 * sigma * sigma * m2)
        };
        while tail(r) > 1e-9 {
            r += 0.25;
        }
        let half = r * sigma;
        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(dim as f64 / 2.0);
        Self::new(
            format!("gaussian(sigma={sigma})"),
            dim,
            Support::Box {
                lo: vec![-half; dim],
                hi: vec![half; dim],
            },
            move |x| (-0.5 * x.iter().map(|v| v * v).sum::<f64>() / (sigma * sigma)).exp() / norm,
        )
    }

    /// θ(x) = c(1+|x|)^{−p} on ℝ with p > 1, normalized.
    pub fn power_tail(p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(FgfError::Domain {
                name: "tail exponent",
                value: p,
                range: "(1, ∞)",
            });
        }
        let c = (p - 1.0) / 2.0;
        let mut t = Self::new(format!("power-tail(p={p})"), 1, Support::Line, move |x| c * (1.0 + x[0].abs()).powf(-p))?;
        t.kinks = vec![0.0];
        Ok(t)
    }

    /// Declares interior points where a 1-D θ is not smooth, so quadratures
    /// can split there.
    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }

    /// Rescales the density: returns θ_c(x) = c·θ(x), used to build
    /// deliberately unnormalized inputs.
    pub fn scaled(&self, c: f64) -> Self {
        let f = self.f.clone();
        Self {
            name: format!("{}×{c}", self.name),
            dim: self.dim,
            support: self.support.clone(),
            f: Arc::new(move |x| c * f(x)),
            uniform_interval: None,
            kinks: self.kinks.clone(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// ∫θ, by quadrature over the declared support.
    pub fn mass(&self, tol: Tol) -> Result<Estimate> {
        if self.dim == 1 {
            let f = |n: Node| self.eval(&[n.x]);
            return integrate_line(&f, &self.support, &self.kinks, tol);
        }
        integrate_over(&|x: &[f64]| self.eval(x), &self.support, &[], tol)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    /// ψ(·, y) uniform on [lo.0 + lo.1·y, hi.0 + hi.1·y] (1-D).
    Interval { lo: (f64, f64), hi: (f64, f64) },
    Convolution(Theta),
    SelfSimilar(Theta),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelFlags {
    pub convolution: bool,
    pub self_similar: bool,
}

/// A validated-on-construction normalizing kernel ψ(x, y).
#[derive(Debug, Clone)]
pub struct NormalizingKernel {
    name: String,
    shape: Shape,
    domain: Domain,
    flags: KernelFlags,
    tol: Tol,
}

const MASS_TOL: f64 = 1e-6;
const DEFAULT_TOL: Tol = Tol::new(1e-11, 1e-11);

fn check_mass(theta: &Theta) -> Result<()> {
    let m = theta.mass(Tol::new(1e-9, 1e-9))?;
    if (m.value - 1.0).abs() > MASS_TOL {
        return Err(FgfError::Mass {
            mass: m.value,
            tol: MASS_TOL,
        });
    }
    Ok(())
}

/// ψ(x, y) = θ(y − x).
pub fn make_convolution_kernel(theta: Theta, domain: Domain) -> Result<NormalizingKernel> {
    if theta.dim != domain.dim() {
        return Err(FgfError::Precondition("θ and D have different dimensions".into()));
    }
    check_mass(&theta)?;
    let shape = match theta.uniform_interval {
        // θ(y − u) = 1/|A| iff u ∈ [y − a₁, y − a₀]
        Some((a0, a1)) => Shape::Interval {
            lo: (-a1, 1.0),
            hi: (-a0, 1.0),
        },
        None => Shape::Convolution(theta.clone()),
    };
    Ok(NormalizingKernel {
        name: format!("convolution[{}]", theta.name),
        shape,
        domain,
        flags: KernelFlags {
            convolution: true,
            self_similar: false,
        },
        tol: DEFAULT_TOL,
    })
}

/// ψ(x, y) = ‖y‖^{−d}θ(x/‖y‖), so that ψ(λx, λy) = λ^{−d}ψ(x, y) and each
/// ψ(·, y) is a probability density.
pub fn make_self_similar_kernel(theta: Theta, domain: Domain) -> Result<NormalizingKernel> {
    if theta.dim != domain.dim() {
        return Err(FgfError::Precondition("θ and D have different dimensions".into()));
    }
    if domain.origin_gap() <= 0.0 {
        return Err(FgfError::BadDomain(
            "self-similar kernels need a domain that keeps away from the origin".into(),
        ));
    }
    check_mass(&theta)?;
    let positive_line = domain.dim() == 1 && domain.lo()[0] > 0.0;
    let shape = match theta.uniform_interval {
        Some((a0, a1)) if positive_line => Shape::Interval {
            lo: (0.0, a0),
            hi: (0.0, a1),
        },
        _ => Shape::SelfSimilar(theta.clone()),
    };
    Ok(NormalizingKernel {
        name: format!("self-similar[{}]", theta.name),
        shape,
        domain,
        flags: KernelFlags {
            convolution: false,
            self_similar: true,
        },
        tol: DEFAULT_TOL,
    })
}

/// ψ(u, t) = t⁻¹1_{[0,t]}(u) on D = [δ, T]: adapted and self-similar.
pub fn nr_kernel(delta: f64, horizon: f64) -> Result<NormalizingKernel> {
    let domain = Domain::interval(delta, horizon)?;
    let mut k = make_self_similar_kernel(Theta::uniform_box(vec![0.0], vec![1.0])?, domain)?;
    k.name = "nr".into();
    Ok(k)
}

/// Backward moving average ψ(u, t) = w⁻¹1_{[t−w, t]}(u) on D = [lo, hi].
pub fn moving_average_kernel(width: f64, lo: f64, hi: f64) -> Result<NormalizingKernel> {
    let mut k = make_convolution_kernel(Theta::uniform_box(vec![0.0], vec![width])?, Domain::interval(lo, hi)?)?;
    k.name = format!("moving-average(w={width})");
    Ok(k)
}

impl NormalizingKernel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn flags(&self) -> KernelFlags {
        self.flags
    }

    /// Tolerance used when an average has no closed form.
    pub fn with_tolerance(mut self, tol: Tol) -> Self {
        self.tol = tol;
        self
    }

    /// True when averages of [`Profile`]s are evaluated in closed form.
    pub fn has_closed_forms(&self) -> bool {
        matches!(self.shape, Shape::Interval { .. })
    }

    fn interval(&self, y: f64) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Interval { lo, hi } => Some((lo.0 + lo.1 * y, hi.0 + hi.1 * y)),
            _ => None,
        }
    }

    /// ψ(x, y).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.shape {
            Shape::Interval { .. } => {
                let (a, b) = self.interval(y[0]).unwrap_or((0.0, 0.0));
                if x[0] >= a && x[0] <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Shape::Convolution(t) => {
                let z: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                t.eval(&z)
            }
            Shape::SelfSimilar(t) => {
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let z: Vec<f64> = x.iter().map(|v| v / r).collect();
                t.eval(&z) / r.powi(y.len() as i32)
            }
        }
    }

    /// Support of ψ(·, y).
    pub fn support(&self, y: &[f64]) -> Support {
        match &self.shape {
            Shape::Interval { .. } => {
                let (a, b) = self.interval(y[0]).unwrap_or((0.0, 0.0));
                Support::Box { lo: vec![a], hi: vec![b] }
            }
            Shape::Convolution(t) => t.support.map_affine(-1.0, y),
            Shape::SelfSimilar(t) => {
                let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                t.support.map_affine(r, &vec![0.0; y.len()])
            }
        }
    }

    /// ∫φ(p − u)ψ(u, y)du, closed form when available.
    pub fn single(&self, profile: Profile, p: &[f64], y: &[f64]) -> Result<f64> {
        if let Some((a, b)) = self.interval(y[0]) {
            let p = p[0];
            return Ok((profile.phi1(p - a) - profile.phi1(p - b)) / (b - a));
        }
        Ok(self.single_quad(profile, p, y, self.tol)?.value)
    }

    /// ∬φ(u − v)ψ(u, y)ψ(v, w)du dv, closed form when available.
    pub fn double(&self, profile: Profile, y: &[f64], w: &[f64]) -> Result<f64> {
        if let (Some((a1, b1)), Some((a2, b2))) = (self.interval(y[0]), self.interval(w[0])) {
            let f = |z: f64| profile.phi2(z);
            let s = f(b1 - a2) - f(a1 - a2) - f(b1 - b2) + f(a1 - b2);
            return Ok(s / ((b1 - a1) * (b2 - a2)));
        }
        Ok(self.double_quad(profile, y, w, self.tol)?.value)
    }

    /// Points where ψ(·, y) is not smooth inside its support (1-D).
    fn kinks(&self, y: &[f64]) -> Vec<f64> {
        match &self.shape {
            Shape::Interval { .. } => vec![],
            Shape::Convolution(t) => t.kinks.iter().map(|k| y[0] - k).collect(),
            Shape::SelfSimilar(t) => t.kinks.iter().map(|k| y[0].abs() * k).collect(),
        }
    }

    /// Quadrature version of [`NormalizingKernel::single`], whatever the shape.
    ///
    /// In 1-D the singular point is a breakpoint. In 2-D the integral is
    /// taken in polar coordinates around p, which absorbs the singularity
    /// into the r dr measure.
    pub fn single_quad(&self, profile: Profile, p: &[f64], y: &[f64], tol: Tol) -> Result<Estimate> {
        let support = self.support(y);
        match p.len() {
            1 => {
                let p0 = p[0];
                let f = |n: Node| {
                    let w = self.eval(&[n.x], y);
                    if w == 0.0 {
                        0.0
                    } else {
                        profile.eval1(-n.offset(p0)) * w
                    }
                };
                let mut pts = self.kinks(y);
                pts.push(p0);
                pts.extend(profile.kinks().iter().flat_map(|k| [p0 - k, p0 + k]));
                integrate_line(&f, &support, &pts, tol)
            }
            2 => self.radial_2d(profile, p, y, &support, tol),
            _ => {
                let f = |u: &[f64]| {
                    let w = self.eval(u, y);
                    if w == 0.0 {
                        return 0.0;
                    }
                    let z: Vec<f64> = p.iter().zip(u).map(|(a, b)| a - b).collect();
                    if z.iter().all(|v| *v == 0.0) {
                        // a node that rounds onto the singular point carries no mass
                        return 0.0;
                    }
                    profile.eval(&z) * w
                };
                integrate_over(&f, &support, p, tol)
            }
        }
    }

    fn radial_2d(&self, profile: Profile, p: &[f64], y: &[f64], support: &Support, tol: Tol) -> Result<Estimate> {
        let err = std::cell::Cell::new(None::<FgfError>);
        let evals = std::cell::Cell::new(0usize);
        let inner_tol = Tol::new(tol.abs * 0.05, tol.rel * 0.1);
        let ray = |alpha: f64| {
            let (s, c) = alpha.sin_cos();
            let Some((t0, t1)) = ray_interval(support, p, c, s) else {
                return 0.0;
            };
            let pts = quad::breakpoints(t0, t1, profile.kinks());
            let f = |n: Node| {
                let r = n.x;
                if r == 0.0 {
                    return 0.0;
                }
                let w = self.eval(&[p[0] + r * c, p[1] + r * s], y);
                if w == 0.0 {
                    0.0
                } else {
                    profile.eval1(r) * r * w
                }
            };
            match quad::integrate(f, &pts, inner_tol) {
                Ok(e) => {
                    evals.set(evals.get() + e.evals);
                    e.value
                }
                Err(e) => {
                    err.set(Some(e));
                    f64::NAN
                }
            }
        };
        let pts = angular_breaks(support, p);
        let out = quad::integrate_fn(ray, &pts, tol);
        if let Some(e) = err.take() {
            return Err(e);
        }
        out.map(|e| Estimate {
            evals: e.evals + evals.get(),
            ..e
        })
    }

    /// Quadrature version of [`NormalizingKernel::double`].
    pub fn double_quad(&self, profile: Profile, y: &[f64], w: &[f64], tol: Tol) -> Result<Estimate> {
        let support = self.support(y);
        let inner_tol = Tol::new(tol.abs * 0.1, tol.rel * 0.1);
        let err = std::cell::Cell::new(None::<FgfError>);
        let f = |u: &[f64]| {
            let wy = self.eval(u, y);
            if wy == 0.0 {
                return 0.0;
            }
            // inner integral ∫φ(u − v)ψ(v, w)dv
            match self.single_quad(profile, u, w, inner_tol) {
                Ok(e) => e.value * wy,
                Err(e) => {
                    err.set(Some(e));
                    f64::NAN
                }
            }
        };
        let out = if y.len() == 1 {
            // the inner average is not smooth where u ∓ (profile kinks) crosses
            // the ends or kinks of ψ(·, w)
            let (a, b) = self.support(w).slice(0, &[]);
            let mut ends: Vec<f64> = [a, b].into_iter().filter(|v| v.is_finite()).collect();
            ends.extend(self.kinks(w));
            let mut pts: Vec<f64> = ends.clone();
            for k in profile.kinks() {
                pts.extend(ends.iter().flat_map(|e| [e - k, e + k]));
            }
            pts.extend(self.kinks(y));
            integrate_line(&|n: Node| f(&[n.x]), &support, &pts, tol)
        } else {
            // the outer integrand is continuous; a tensor Gauss–Legendre rule
            // at two orders is far cheaper than nested adaptive quadrature
            let hi = tensor_gauss_legendre(&f, &support, 6, 4);
            let lo = tensor_gauss_legendre(&f, &support, 6, 2);
            Ok(Estimate {
                value: hi.value,
                error: (hi.value - lo.value).abs(),
                evals: hi.evals + lo.evals,
            })
        };
        if let Some(e) = err.take() {
            return Err(e);
        }
        out
    }

    /// ∫f(u)ψ(u, y)du for an arbitrary integrand; `hints` lists points where
    /// f is singular or kinked.
    pub fn average(&self, f: &dyn Fn(&[f64]) -> f64, y: &[f64], hints: &[Vec<f64>], tol: Tol) -> Result<Estimate> {
        let support = self.support(y);
        let g = |u: &[f64]| {
            let w = self.eval(u, y);
            if w == 0.0 {
                0.0
            } else {
                f(u) * w
            }
        };
        if y.len() == 1 {
            let mut pts: Vec<f64> = hints.iter().map(|h| h[0]).collect();
            pts.extend(self.kinks(y));
            integrate_line(&|n: Node| g(&[n.x]), &support, &pts, tol)
        } else {
            let hint = hints.first().cloned().unwrap_or_default();
            integrate_over(&g, &support, &hint, tol)
        }
    }

    pub fn mass(&self, y: &[f64], tol: Tol) -> Result<Estimate> {
        self.single_quad(Profile::Power(0.0), y, y, tol)
    }
}

/// 1-D integration over a support, with interior breakpoints. Unbounded
/// supports get geometric tail panels so slowly decaying tails are either
/// summed or reported as divergent.
fn integrate_line<F: Fn(Node) -> f64>(f: &F, support: &Support, interior: &[f64], tol: Tol) -> Result<Estimate> {
    let (lo, hi) = support.slice(0, &[]);
    if lo.is_finite() && hi.is_finite() {
        let pts = quad::breakpoints(lo, hi, interior);
        return quad::integrate(f, &pts, tol);
    }
    let mut core: Vec<f64> = interior.to_vec();
    core.push(0.0);
    let c_lo = core.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let c_hi = core.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let pts = quad::breakpoints(c_lo, c_hi, interior);
    let part = Tol::new(tol.abs / 3.0, tol.rel);
    let mid = quad::integrate(f, &pts, part)?;
    let right = quad::semi_infinite_panels(f, c_hi, 1.0, part)?;
    let mirrored = |n: Node| {
        f(Node {
            x: 2.0 * c_lo - n.x,
            a: f64::NEG_INFINITY,
            da: f64::INFINITY,
            b: c_lo,
            db: n.da,
        })
    };
    let left = quad::semi_infinite_panels(&mirrored, c_lo, 1.0, part)?;
    Ok(mid + right + left)
}

/// Parameter range [t0, t1] (t ≥ 0) of the ray p + t(c, s) inside a 2-D support.
fn ray_interval(support: &Support, p: &[f64], c: f64, s: f64) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    match support {
        Support::Box { lo, hi } => {
            for (k, dir) in [(0, c), (1, s)] {
                if dir.abs() < 1e-300 {
                    if p[k] < lo[k] || p[k] > hi[k] {
                        return None;
                    }
                    continue;
                }
                let (a, b) = ((lo[k] - p[k]) / dir, (hi[k] - p[k]) / dir);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        Support::Ball { center, radius } => {
            let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
            let b = dx * c + dy * s;
            let q = dx * dx + dy * dy - radius * radius;
            let disc = b * b - q;
            if disc <= 0.0 {
                return None;
            }
            let root = disc.sqrt();
            t0 = t0.max(-b - root);
            t1 = t1.min(-b + root);
        }
        Support::Line => return None,
    }
    (t1 > t0).then_some((t0, t1))
}

/// Angles in [0, 2π] where the ray length from p changes non-smoothly.
fn angular_breaks(support: &Support, p: &[f64]) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let norm_angle = |a: f64| a.rem_euclid(tau);
    let mut v = vec![0.0, tau];
    match support {
        Support::Box { lo, hi } => {
            for cx in [lo[0], hi[0]] {
                for cy in [lo[1], hi[1]] {
                    if cx != p[0] || cy != p[1] {
                        v.push(norm_angle((cy - p[1]).atan2(cx - p[0])));
                    }
                }
            }
        }
        Support::Ball { center, radius } => {
            let (dx, dy) = (center[0] - p[0], center[1] - p[1]);
            let dist = (dx * dx + dy * dy).sqrt();
            if dist >= *radius && dist > 0.0 {
                let base = dy.atan2(dx);
                let half = (radius / dist).min(1.0).asin();
                v.extend([norm_angle(base - half), norm_angle(base + half), norm_angle(base)]);
            }
        }
        Support::Line => {}
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    v
}

/// Iterated composite Gauss–Legendre rule (`panels` panels of `n` nodes per
/// axis) over a box or ball.
fn tensor_gauss_legendre(f: &dyn Fn(&[f64]) -> f64, support: &Support, n: usize, panels: usize) -> Estimate {
    let (gx, gw) = quad::gauss_legendre(n);
    let d = support.dim().unwrap_or(1);
    let mut evals = 0;
    let mut buf = vec![0.0; d];
    let value = tensor_rec(f, support, (&gx, &gw), panels, &mut buf, 0, &mut evals);
    Estimate {
        value,
        error: f64::NAN,
        evals,
    }
}

fn tensor_rec(
    f: &dyn Fn(&[f64]) -> f64,
    support: &Support,
    rule: (&[f64], &[f64]),
    panels: usize,
    buf: &mut [f64],
    k: usize,
    evals: &mut usize,
) -> f64 {
    let (lo, hi) = support.slice(k, &buf[..k]);
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return 0.0;
    }
    let width = (hi - lo) / panels as f64;
    let h = 0.5 * width;
    let mut sum = 0.0;
    for j in 0..panels {
        let c = lo + width * (j as f64 + 0.5);
        for (xi, wi) in rule.0.iter().zip(rule.1) {
            buf[k] = c + h * xi;
            let v = if k + 1 == buf.len() {
                *evals += 1;
                f(buf)
            } else {
                tensor_rec(f, support, rule, panels, buf, k + 1, evals)
            };
            sum += wi * h * v;
        }
    }
    sum
}

/// Iterated integration over a box or ball in any dimension; `point` (if
/// nonempty) marks a possible singularity whose coordinates become
/// breakpoints on every axis.
pub(crate) fn integrate_over(f: &dyn Fn(&[f64]) -> f64, support: &Support, point: &[f64], tol: Tol) -> Result<Estimate> {
    let d = support.dim().unwrap_or(1);
    if support.dim().is_none() {
        let pts: Vec<f64> = point.to_vec();
        return integrate_line(&|n: Node| f(&[n.x]), support, &pts, tol);
    }
    let mut buf = vec![0.0; d];
    iterate(f, support, point, tol, 0, &mut buf)
}

fn iterate(
    f: &dyn Fn(&[f64]) -> f64,
    support: &Support,
    point: &[f64],
    tol: Tol,
    k: usize,
    buf: &mut [f64],
) -> Result<Estimate> {
    let d = buf.len();
    let (lo, hi) = support.slice(k, &buf[..k]);
    if !(hi > lo) {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let interior: Vec<f64> = point.get(k).copied().into_iter().collect();
    let pts = quad::breakpoints(lo, hi, &interior);
    if k + 1 == d {
        let cell = std::cell::RefCell::new(buf.to_vec());
        return quad::integrate(
            |n: Node| {
                let mut b = cell.borrow_mut();
                b[k] = n.x;
                f(&b)
            },
            &pts,
            tol,
        );
    }
    let inner_tol = Tol::new(tol.abs / (hi - lo).max(1.0) * 0.1, tol.rel * 0.1);
    let err = std::cell::Cell::new(None::<FgfError>);
    let evals = std::cell::Cell::new(0usize);
    let cell = std::cell::RefCell::new(buf.to_vec());
    let out = quad::integrate(
        |n: Node| {
            let mut b = cell.borrow().clone();
            b[k] = n.x;
            match iterate(f, support, point, inner_tol, k + 1, &mut b) {
                Ok(e) => {
                    evals.set(evals.get() + e.evals);
                    e.value
                }
                Err(e) => {
                    err.set(Some(e));
                    0.0
                }
            }
        },
        &pts,
        tol,
    );
    if let Some(e) = err.take() {
        return Err(e);
    }
    out.map(|e| Estimate {
        evals: e.evals + evals.get(),
        ..e
    })
}

/// Per-condition result of [`validate_kernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub condition: String,
    /// Sampled supremum (∞ when some integral diverges).
    pub supremum: f64,
    pub quadrature_error: f64,
    /// Supremum on the full grid minus supremum on the half-resolution grid.
    pub refinement_delta: f64,
    pub note: Option<String>,
}

impl ConditionEstimate {
    pub fn finite(&self) -> bool {
        self.supremum.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelValidationReport {
    pub kernel: String,
    pub h0: f64,
    /// max over the y-grid of |∫ψ(x,y)dx − 1|.
    pub mass_deviation: f64,
    pub mass_tolerance: f64,
    pub moment: ConditionEstimate,
    pub local_log: ConditionEstimate,
    pub pair_log: ConditionEstimate,
    pub grid_points: usize,
    pub pass: bool,
}

/// Sampling options for [`validate_kernel_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Grid points per axis for y (capped so the grid has at most 32² points).
    pub per_axis: usize,
    /// The (y, w) pair condition uses `per_axis / pair_stride` points per
    /// axis (at most 3 when d ≥ 2).
    pub pair_stride: usize,
    pub tol: Tol,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            per_axis: 32,
            pair_stride: 4,
            tol: Tol::new(1e-9, 1e-8),
        }
    }
}

/// Checks the normalizing-kernel conditions on a sampled grid of D.
pub fn validate_kernel(psi: &NormalizingKernel, h0: f64) -> Result<KernelValidationReport> {
    validate_kernel_with(psi, h0, ValidationOptions::default())
}

type PairJob<'a> = dyn Fn(&[f64], &[f64]) -> Result<Estimate> + Sync + 'a;

pub fn validate_kernel_with(psi: &NormalizingKernel, h0: f64, opts: ValidationOptions) -> Result<KernelValidationReport> {
    if !(h0 > 0.0 && h0 < 0.5) {
        return Err(FgfError::Domain {
            name: "H0",
            value: h0,
            range: "(0, 1/2)",
        });
    }
    let d = psi.dim();
    let per_axis = if d <= 2 {
        opts.per_axis
    } else {
        ((opts.per_axis * opts.per_axis) as f64).powf(1.0 / d as f64).floor() as usize
    }
    .max(2);
    let grid = psi.domain.sample_grid(per_axis);
    let coarse = psi.domain.sample_grid(per_axis.div_ceil(2).max(2));
    // nested quadrature in d ≥ 2 is only asked for moderate accuracy
    let tol = if d == 1 {
        opts.tol
    } else {
        Tol::new(opts.tol.abs.max(1e-6), opts.tol.rel.max(1e-6))
    };

    let mass_dev = grid
        .par_iter()
        .map(|y| psi.mass(y, tol).map(|m| (m.value - 1.0).abs()))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;

    let sup_of = |pairs: Vec<(Vec<f64>, Vec<f64>)>, job: &PairJob| {
        pairs
            .par_iter()
            .map(|(a, b)| job(a, b).map(|e| (e.value, e.error)))
            .try_reduce(|| (f64::NEG_INFINITY, 0.0), |x, y| Ok((x.0.max(y.0), x.1.max(y.1))))
    };
    let sup_single = |profile: Profile, at_y: bool, name: &str| -> ConditionEstimate {
        let pairs = |pts: &[Vec<f64>]| -> Vec<(Vec<f64>, Vec<f64>)> {
            pts.iter()
                .map(|y| (if at_y { y.clone() } else { vec![0.0; d] }, y.clone()))
                .collect()
        };
        let job = |p: &[f64], y: &[f64]| psi.single_quad(profile, p, y, tol);
        summarize(name, sup_of(pairs(&grid), &job), sup_of(pairs(&coarse), &job))
    };
    let moment = sup_single(Profile::Power(2.0 * h0), false, "sup_y ∫‖x‖^{2H0}ψ(x,y)dx");
    let local_log = sup_single(Profile::LogNegSq, true, "sup_y ∫(log₋‖x−y‖)²ψ(x,y)dx");

    // the pair integral is symmetric in (y, w), so only i ≤ j is evaluated
    let all_pairs = |per: usize| -> Vec<(Vec<f64>, Vec<f64>)> {
        let pts = psi.domain.sample_grid(per.max(2));
        pts.iter()
            .enumerate()
            .flat_map(|(i, a)| pts[i..].iter().map(move |b| (a.clone(), b.clone())))
            .collect()
    };
    let mut pair_per_axis = per_axis / opts.pair_stride.max(1);
    if d >= 2 {
        // each 2-D pair integral costs seconds; keep the pair grid small
        pair_per_axis = pair_per_axis.min(3);
    }
    let job = |y: &[f64], w: &[f64]| psi.double_quad(Profile::LogNegSq, y, w, tol);
    let pair_log = summarize(
        "sup_{y,w} ∬(log₋‖x−v‖)²ψ(x,y)ψ(v,w)dxdv",
        sup_of(all_pairs(pair_per_axis), &job),
        sup_of(all_pairs(pair_per_axis / 2), &job),
    );

    let pass = mass_dev <= MASS_TOL && moment.finite() && local_log.finite() && pair_log.finite();
    Ok(KernelValidationReport {
        kernel: psi.name.clone(),
        h0,
        mass_deviation: mass_dev,
        mass_tolerance: MASS_TOL,
        moment,
        local_log,
        pair_log,
        grid_points: grid.len(),
        pass,
    })
}

fn summarize(name: &str, fine: Result<(f64, f64)>, coarse: Result<(f64, f64)>) -> ConditionEstimate {
    match (fine, coarse) {
        (Ok((s, e)), Ok((c, _))) => ConditionEstimate {
            condition: name.into(),
            supremum: s,
            quadrature_error: e,
            refinement_delta: s - c,
            note: None,
        },
        (Err(e), _) | (_, Err(e)) => ConditionEstimate {
            condition: name.into(),
            supremum: f64::INFINITY,
            quadrature_error: f64::NAN,
            refinement_delta: f64::NAN,
            note: Some(e.to_string()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const Q: Tol = Tol::new(1e-12, 1e-12);

    fn generic_nr(delta: f64, horizon: f64) -> NormalizingKernel {
        let theta = Theta::new("indicator [0,1]", 1, Support::Box { lo: vec![0.0], hi: vec![1.0] }, |x| {
            if (0.0..=1.0).contains(&x[0]) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        make_self_similar_kernel(theta, Domain::interval(delta, horizon).unwrap()).unwrap()
    }

    #[test]
    fn antiderivatives_differentiate_back() {
        let profiles = [
            Profile::L(0.0),
            Profile::L(0.07),
            Profile::L(0.6),
            Profile::Power(0.8),
            Profile::Odd(0.3),
            Profile::LogNegSq,
        ];
        for p in profiles {
            for &z in &[-2.3, -0.7, -0.05, 0.04, 0.5, 0.99, 1.6] {
                let h = 1e-5;
                let d1 = (p.phi1(z + h) - p.phi1(z - h)) / (2.0 * h);
                assert_relative_eq!(d1, p.eval1(z), max_relative = 1e-6, epsilon = 1e-8);
                let d2 = (p.phi2(z + h) - p.phi2(z - h)) / (2.0 * h);
                assert_relative_eq!(d2, p.phi1(z), max_relative = 1e-6, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn closed_forms_match_quadrature_for_nr() {
        let fast = nr_kernel(1.0 / 64.0, 1.0).unwrap();
        let slow = generic_nr(1.0 / 64.0, 1.0);
        assert!(fast.has_closed_forms() && !slow.has_closed_forms());
        let profiles = [Profile::L(0.0), Profile::L(0.2), Profile::Power(0.3), Profile::Odd(0.45), Profile::LogNegSq];
        for p in profiles {
            for &(x, y) in &[(1.0, 1.0), (0.3, 0.9), (0.9, 0.3), (0.02, 0.5)] {
                let a = fast.single(p, &[x], &[y]).unwrap();
                let b = slow.single_quad(p, &[x], &[y], Q).unwrap().value;
                assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-11);
                let a = fast.double(p, &[x], &[y]).unwrap();
                let b = slow.double_quad(p, &[x], &[y], Tol::new(1e-11, 1e-11)).unwrap().value;
                assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn moving_average_closed_forms_match_quadrature() {
        let fast = moving_average_kernel(0.25, 0.5, 2.0).unwrap();
        let theta = Theta::new("box", 1, Support::Box { lo: vec![0.0], hi: vec![0.25] }, |x| {
            if (0.0..=0.25).contains(&x[0]) {
                4.0
            } else {
                0.0
            }
        })
        .unwrap();
        let slow = make_convolution_kernel(theta, Domain::interval(0.5, 2.0).unwrap()).unwrap();
        for &(x, y) in &[(1.0, 1.0), (0.7, 1.9), (1.3, 1.2)] {
            for p in [Profile::L(0.1), Profile::L(0.0), Profile::Odd(0.3)] {
                let a = fast.single(p, &[x], &[y]).unwrap();
                let b = slow.single_quad(p, &[x], &[y], Q).unwrap().value;
                assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-11);
                let a = fast.double(p, &[x], &[y]).unwrap();
                let b = slow.double_quad(p, &[x], &[y], Tol::new(1e-11, 1e-11)).unwrap().value;
                assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn nr_mass_is_one() {
        let k = nr_kernel(0.1, 2.0).unwrap();
        for &t in &[0.1, 0.5, 2.0] {
            assert_eq!(k.single(Profile::Power(0.0), &[t], &[t]).unwrap(), 1.0);
            assert_relative_eq!(k.mass(&[t], Q).unwrap().value, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn unnormalized_theta_rejected() {
        let theta = Theta::uniform_box(vec![0.0], vec![1.0]).unwrap().scaled(0.9);
        let r = make_convolution_kernel(theta, Domain::interval(0.0, 1.0).unwrap());
        assert!(matches!(r, Err(FgfError::Mass { .. })));
    }

    #[test]
    fn self_similar_rejects_origin() {
        let theta = Theta::unit_ball(2).unwrap();
        let d = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0], 0.0).unwrap();
        assert!(matches!(make_self_similar_kernel(theta.clone(), d), Err(FgfError::BadDomain(_))));
        let d = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0], 0.2).unwrap();
        assert!(make_self_similar_kernel(theta, d).is_ok());
    }

    #[test]
    fn validate_nr() {
        let k = nr_kernel(0.1, 2.0).unwrap();
        let r = validate_kernel(&k, 0.4).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.mass_deviation < 1e-9);
        // ∫_0^t u^{0.8}/t du = t^{0.8}/1.8, largest at t = 2
        assert_relative_eq!(r.moment.supremum, 2f64.powf(0.8) / 1.8, max_relative = 1e-8);
        // ∫_0^t log₋²(t−u)/t du = (2 − ...) largest at small t
        let t = 0.1f64;
        let l = t.ln();
        assert_relative_eq!(r.local_log.supremum, l * l - 2.0 * l + 2.0, max_relative = 1e-8);
        assert!(r.pair_log.finite());
    }

    #[test]
    fn validation_moment_across_h0() {
        let k = nr_kernel(0.1, 2.0).unwrap();
        let opts = ValidationOptions {
            per_axis: 8,
            pair_stride: 2,
            ..Default::default()
        };
        for h0 in [0.45, 0.3, 0.1, 0.01] {
            let r = validate_kernel_with(&k, h0, opts).unwrap();
            assert!(r.pass);
            // ∫_0^t u^{2H0}/t du = t^{2H0}/(2H0+1), largest at t = 2
            let exact = 2f64.powf(2.0 * h0) / (2.0 * h0 + 1.0);
            assert_relative_eq!(r.moment.supremum, exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn validate_unit_cube_convolution() {
        let k = make_convolution_kernel(Theta::uniform_box(vec![0.0], vec![1.0]).unwrap(), Domain::interval(-1.0, 1.0).unwrap()).unwrap();
        assert!(validate_kernel(&k, 0.4).unwrap().pass);
    }

    #[test]
    fn validate_heavy_tail_fails_moment() {
        let k = make_convolution_kernel(Theta::power_tail(1.1).unwrap(), Domain::interval(0.0, 1.0).unwrap()).unwrap();
        let opts = ValidationOptions {
            per_axis: 4,
            pair_stride: 2,
            tol: Tol::new(1e-8, 1e-8),
        };
        let r = validate_kernel_with(&k, 0.4, opts).unwrap();
        assert!(!r.pass);
        assert!(!r.moment.finite(), "{r:?}");
        assert!(r.mass_deviation < 1e-6);
    }

    #[test]
    fn gaussian_bump_validates() {
        let theta = Theta::gaussian(1, 0.3).unwrap();
        let k = make_convolution_kernel(theta, Domain::interval(-1.0, 2.0).unwrap()).unwrap();
        let r = validate_kernel(&k, 0.4).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.mass_deviation < 1e-7);
    }

    #[test]
    fn gaussian_bump_2d_conditions() {
        let theta = Theta::gaussian(2, 0.3).unwrap();
        assert_relative_eq!(theta.mass(Tol::new(1e-10, 1e-10)).unwrap().value, 1.0, max_relative = 1e-8);
        let k = make_convolution_kernel(theta, Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], 0.0).unwrap()).unwrap();
        let tol = Tol::new(1e-7, 1e-7);
        let y = [0.5, 0.5];
        assert_relative_eq!(k.mass(&y, tol).unwrap().value, 1.0, max_relative = 1e-7);
        // E(log₋‖Z‖)² for Z ~ N(0, 0.09 I₂): ∫_0^1 log²r · (r/σ²)e^{−r²/2σ²}dr
        let s2 = 0.09;
        let want = quad::integrate_fn(|r: f64| if r == 0.0 { 0.0 } else { r.ln().powi(2) * r / s2 * (-r * r / (2.0 * s2)).exp() }, &[0.0, 1.0], Tol::new(1e-13, 1e-13))
            .unwrap()
            .value;
        assert_relative_eq!(k.single_quad(Profile::LogNegSq, &y, &y, tol).unwrap().value, want, max_relative = 1e-6);
        let e = k.double_quad(Profile::LogNegSq, &[0.0, 0.0], &[1.0, 1.0], Tol::new(1e-5, 1e-5)).unwrap();
        assert!(e.value.is_finite() && e.value > 0.0);
        assert!(e.error < 0.05 * e.value, "{e:?}");
    }

    #[test]
    fn unit_ball_2d_mass() {
        let theta = Theta::unit_ball(2).unwrap();
        assert_relative_eq!(theta.mass(Tol::new(1e-10, 1e-10)).unwrap().value, 1.0, max_relative = 1e-8);
        let d = Domain::new(vec![0.5, 0.5], vec![1.5, 1.5], 0.0).unwrap();
        let k = make_self_similar_kernel(theta, d).unwrap();
        assert_relative_eq!(k.mass(&[0.7, 1.2], Tol::new(1e-9, 1e-9)).unwrap().value, 1.0, max_relative = 1e-7);
    }

    fn dyadic() -> impl Strategy<Value = f64> {
        (-512i32..512).prop_map(|k| k as f64 / 256.0)
    }

    proptest! {
        #[test]
        fn self_similar_scaling_1d(x in 0.0f64..3.0, y in 0.2f64..2.0) {
            let k = generic_nr(0.1, 4.0);
            for lam in [0.5, 2.0] {
                prop_assert_eq!(lam * k.eval(&[lam * x], &[lam * y]), k.eval(&[x], &[y]));
            }
        }

        #[test]
        fn self_similar_scaling_2d(x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, y0 in 0.3f64..1.0, y1 in 0.3f64..1.0) {
            let d = Domain::new(vec![0.3, 0.3], vec![1.0, 1.0], 0.0).unwrap();
            let k = make_self_similar_kernel(Theta::gaussian(2, 0.5).unwrap(), d).unwrap();
            for lam in [0.5, 2.0] {
                let lhs = lam * lam * k.eval(&[lam * x0, lam * x1], &[lam * y0, lam * y1]);
                prop_assert_eq!(lhs, k.eval(&[x0, x1], &[y0, y1]));
            }
        }

        #[test]
        fn convolution_shift_invariance(x in dyadic(), y in dyadic(), c in dyadic()) {
            let k = make_convolution_kernel(Theta::gaussian(1, 0.7).unwrap(), Domain::interval(-2.0, 2.0).unwrap()).unwrap();
            prop_assert_eq!(k.eval(&[x + c], &[y + c]), k.eval(&[x], &[y]));
            let m = moving_average_kernel(0.5, -2.0, 2.0).unwrap();
            prop_assert_eq!(m.eval(&[x + c], &[y + c]), m.eval(&[x], &[y]));
        }

        #[test]
        fn kernel_nonnegative(x in -3.0f64..3.0, y in 0.1f64..2.0) {
            prop_assert!(nr_kernel(0.1, 2.0).unwrap().eval(&[x], &[y]) >= 0.0);
        }
    }
}
