//! One-dimensional quadrature for integrands with known singular points.
//!
//! Finite pieces use the tanh-sinh rule and half-lines use exp-sinh; both
//! cluster nodes double-exponentially at the piece ends, so integrable
//! algebraic or logarithmic singularities placed at breakpoints converge
//! quickly. The integrand receives a [`Node`] carrying the distance to both
//! piece ends computed without cancellation, which matters when a singular
//! point sits away from the origin. A global adaptive Gauss–Kronrod rule
//! covers smooth and oscillatory pieces.

use crate::error::{FgfError, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tol {
    pub abs: f64,
    pub rel: f64,
}

impl Tol {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    pub const fn abs(abs: f64) -> Self {
        Self { abs, rel: 0.0 }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error: self.error + o.error,
            evals: self.evals + o.evals,
        }
    }
}

impl Estimate {
    const ZERO: Estimate = Estimate {
        value: 0.0,
        error: 0.0,
        evals: 0,
    };
}

/// A quadrature node on the piece [a, b].
///
/// `da = x − a` and `db = b − x` are exact even when they are far below the
/// spacing of floating-point numbers around `x`.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub a: f64,
    pub da: f64,
    pub b: f64,
    pub db: f64,
}

impl Node {
    /// |x − p|, using the accurate end distances when p is a piece end.
    pub fn dist(&self, p: f64) -> f64 {
        if p == self.a {
            self.da
        } else if p == self.b {
            self.db
        } else {
            (self.x - p).abs()
        }
    }

    /// x − p with the same care as [`Node::dist`].
    pub fn offset(&self, p: f64) -> f64 {
        if p == self.a {
            self.da
        } else if p == self.b {
            -self.db
        } else {
            self.x - p
        }
    }
}

const MAX_LEVEL: usize = 12;
const T_MAX: f64 = 6.0;

fn converged(est: f64, diff: f64, tol: Tol) -> bool {
    diff <= tol.target(est)
}

/// tanh-sinh quadrature on a finite interval.
pub fn tanh_sinh<F: Fn(Node) -> f64>(f: &F, a: f64, b: f64, tol: Tol) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate::ZERO);
    }
    let half = 0.5 * (b - a);
    let eval = |t: f64| -> Option<f64> {
        let s = FRAC_PI_2 * t.sinh();
        let e = (-2.0 * s.abs()).exp();
        // distance from the nearer end, 2h/(e^{2|s|}+1)
        let near = half * 2.0 * e / (1.0 + e);
        if near <= 0.0 {
            return None;
        }
        let far = 2.0 * half - near;
        let (x, da, db) = if t >= 0.0 {
            (b - near, far, near)
        } else {
            (a + near, near, far)
        };
        let x = x.clamp(a.min(b), a.max(b));
        let cosh_s = 0.5 * (s.exp() + (-s).exp());
        let w = half * FRAC_PI_2 * t.cosh() / (cosh_s * cosh_s);
        if w == 0.0 || !w.is_finite() {
            return None;
        }
        let v = f(Node { x, a, da, b, db });
        Some(w * v)
    };
    de_trapezoid(&eval, tol)
}

/// exp-sinh quadrature on [a, ∞) (`upward`) or (−∞, a].
pub fn exp_sinh<F: Fn(Node) -> f64>(f: &F, a: f64, upward: bool, tol: Tol) -> Result<Estimate> {
    let eval = |t: f64| -> Option<f64> {
        let r = (FRAC_PI_2 * t.sinh()).exp();
        if r == 0.0 || !r.is_finite() {
            return None;
        }
        let w = r * FRAC_PI_2 * t.cosh();
        let node = if upward {
            Node {
                x: a + r,
                a,
                da: r,
                b: f64::INFINITY,
                db: f64::INFINITY,
            }
        } else {
            Node {
                x: a - r,
                a: f64::NEG_INFINITY,
                da: f64::INFINITY,
                b: a,
                db: r,
            }
        };
        if !node.x.is_finite() {
            return None;
        }
        Some(w * f(node))
    };
    de_trapezoid(&eval, tol)
}

/// Shared level-doubling trapezoid sweep in the transformed variable.
fn de_trapezoid<G: Fn(f64) -> Option<f64>>(g: &G, tol: Tol) -> Result<Estimate> {
    let mut evals = 0usize;
    let mut h = 1.0;
    // level 0: all integer t in [−T_MAX, T_MAX]
    let mut sum = 0.0;
    let sweep = |start: f64, step: f64, sum: &mut f64, evals: &mut usize| -> Result<()> {
        for dir in [1.0, -1.0] {
            let mut k = usize::from(dir < 0.0 && start == 0.0);
            let mut small = 0usize;
            loop {
                let t = dir * (start + step * k as f64);
                if t.abs() > T_MAX {
                    break;
                }
                k += 1;
                *evals += 1;
                match g(t) {
                    Some(v) if v.is_finite() => {
                        *sum += v;
                        if v.abs() < 1e-300 || v.abs() < 1e-18 * sum.abs() {
                            small += 1;
                            if small >= 3 && t.abs() > 1.0 {
                                break;
                            }
                        } else {
                            small = 0;
                        }
                    }
                    Some(v) => {
                        if t.abs() > 3.0 {
                            break;
                        }
                        return Err(FgfError::Quadrature {
                            estimate: v,
                            error: f64::INFINITY,
                            target: tol.target(*sum),
                        });
                    }
                    None => break,
                }
            }
        }
        Ok(())
    };
    sweep(0.0, 1.0, &mut sum, &mut evals)?;
    let mut est = sum * h;
    let mut diff = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        sweep(h, 2.0 * h, &mut sum, &mut evals)?;
        let next = sum * h;
        diff = (next - est).abs();
        est = next;
        if level >= 3 && converged(est, diff, tol) {
            return Ok(Estimate {
                value: est,
                error: diff,
                evals,
            });
        }
    }
    Err(FgfError::Quadrature {
        estimate: est,
        error: diff,
        target: tol.target(est),
    })
}

/// Integrates over consecutive pieces delimited by `points` (sorted, may
/// start at −∞ and end at +∞). Each piece gets an equal share of the
/// absolute tolerance.
pub fn integrate<F: Fn(Node) -> f64>(f: F, points: &[f64], tol: Tol) -> Result<Estimate> {
    let mut pts: Vec<f64> = points.to_vec();
    pts.dedup();
    if pts.len() < 2 {
        return Ok(Estimate::ZERO);
    }
    if pts.windows(2).any(|w| w[0] > w[1]) {
        return Err(FgfError::Precondition("breakpoints must be sorted".into()));
    }
    let pieces = (pts.len() - 1) as f64;
    let piece_tol = Tol::new(tol.abs / pieces, tol.rel);
    let mut total = Estimate::ZERO;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let est = match (a.is_finite(), b.is_finite()) {
            (true, true) => tanh_sinh(&f, a, b, piece_tol)?,
            (true, false) => exp_sinh(&f, a, true, piece_tol)?,
            (false, true) => exp_sinh(&f, b, false, piece_tol)?,
            (false, false) => {
                let l = exp_sinh(&f, 0.0, false, piece_tol)?;
                l + exp_sinh(&f, 0.0, true, piece_tol)?
            }
        };
        total = total + est;
    }
    Ok(total)
}

/// Convenience wrapper for integrands that only need the abscissa.
pub fn integrate_fn<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tol) -> Result<Estimate> {
    integrate(|n: Node| f(n.x), points, tol)
}

/// Sorted, deduplicated breakpoints: `[lo, interior points within (lo, hi)…, hi]`.
pub fn breakpoints(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut v = vec![lo, hi];
    v.extend(interior.iter().copied().filter(|&p| p > lo && p < hi));
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    v.dedup();
    v
}

// 7-point Gauss / 15-point Kronrod abscissae and weights on [−1, 1].
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639,
    0.949_107_912_342_758_525,
    0.864_864_423_359_769_073,
    0.741_531_185_599_394_440,
    0.586_087_235_467_691_130,
    0.405_845_151_377_397_167,
    0.207_784_955_007_898_468,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_553,
    0.104_790_010_322_250_184,
    0.140_653_259_715_525_919,
    0.169_004_726_639_267_903,
    0.190_350_578_064_785_410,
    0.204_432_940_075_298_892,
    0.209_482_141_084_727_828,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693,
    0.279_705_391_489_276_668,
    0.381_830_050_505_118_945,
    0.417_959_183_673_469_388,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.partial_cmp(&o.error).unwrap_or(Ordering::Equal)
    }
}

/// Global adaptive G7/K15 on [a, b], starting from `initial` equal panels.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    initial: usize,
    tol: Tol,
    max_panels: usize,
) -> Result<Estimate> {
    let n0 = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(2 * n0);
    let (mut value, mut error) = (0.0, 0.0);
    for i in 0..n0 {
        let pa = a + (b - a) * i as f64 / n0 as f64;
        let pb = if i + 1 == n0 {
            b
        } else {
            a + (b - a) * (i + 1) as f64 / n0 as f64
        };
        let (v, e) = gk15(&f, pa, pb);
        value += v;
        error += e;
        heap.push(Panel {
            a: pa,
            b: pb,
            value: v,
            error: e,
        });
    }
    let mut evals = 15 * n0;
    while error > tol.target(value) {
        if heap.len() >= max_panels {
            return Err(FgfError::Quadrature {
                estimate: value,
                error,
                target: tol.target(value),
            });
        }
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evals += 30;
        value += v1 + v2 - p.value;
        error += e1 + e2 - p.error;
        heap.push(Panel {
            a: p.a,
            b: m,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: m,
            b: p.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum to shed accumulated rounding from the running updates
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Estimate {
        value,
        error,
        evals,
    })
}

/// ∫_a^∞ f by geometric panels [a + L·4^k, a + L·4^{k+1}] with a ratio
/// extrapolation of the panel sums.
///
/// Power-law tails produce panel sums in near-geometric progression, so the
/// remainder after the last panel is estimated as c·q/(1−q). A ratio that
/// stays ≥ 1 signals divergence.
pub fn semi_infinite_panels<F: Fn(Node) -> f64>(
    f: &F,
    a: f64,
    scale: f64,
    tol: Tol,
) -> Result<Estimate> {
    let mut total = tanh_sinh(f, a, a + scale, Tol::new(tol.abs * 0.25, tol.rel))?;
    let mut prev: Option<f64> = None;
    let mut prev_q: Option<f64> = None;
    let mut grow = 0usize;
    let mut lo = scale;
    for _ in 0..80 {
        let hi = lo * 4.0;
        let piece = tanh_sinh(
            &|n: Node| {
                f(Node {
                    x: n.x,
                    a,
                    da: n.x - a,
                    b: f64::INFINITY,
                    db: f64::INFINITY,
                })
            },
            a + lo,
            a + hi,
            Tol::new(tol.abs * 0.25, tol.rel),
        )?;
        total = total + piece;
        let c = piece.value;
        if c.abs() <= tol.target(total.value) * 1e-3 {
            return Ok(total);
        }
        if let Some(p) = prev {
            if p != 0.0 {
                let q = c / p;
                if q >= 1.0 {
                    grow += 1;
                    if grow >= 4 {
                        return Err(FgfError::Divergent(format!(
                            "panel sums grow (ratio {q:.3}) beyond x = {:.3e}",
                            a + hi
                        )));
                    }
                } else {
                    grow = 0;
                    if let Some(pq) = prev_q {
                        let tail = c * q / (1.0 - q);
                        if (q - pq).abs() < 1e-3 * (1.0 - q) && tail.abs() < 0.1 * tol.target(total.value) / (1.0 - q) {
                            return Ok(Estimate {
                                value: total.value + tail,
                                error: total.error + (tail * (q - pq).abs() / (1.0 - q)).abs(),
                                evals: total.evals,
                            });
                        }
                        if (q - pq).abs() < 1e-6 {
                            return Ok(Estimate {
                                value: total.value + tail,
                                error: total.error + 1e-6 * tail.abs() / (1.0 - q),
                                evals: total.evals,
                            });
                        }
                    }
                    prev_q = Some(q);
                }
            }
        }
        prev = Some(c);
        lo = hi;
    }
    Err(FgfError::Divergent(format!(
        "no convergence of tail panels up to x = {:.3e}",
        a + lo
    )))
}

/// ∫_a^b f when f behaves like |x − e|^p (p > −1) at the end e, which is a
/// when `at_left` and b otherwise.
///
/// The substitution |x − e| = (b − a)v^{1/(1+p)} turns the singular factor
/// into a constant, so strongly singular ends (p close to −1) converge
/// without relying on nodes extremely close to e.
pub fn integrate_power_end<F: Fn(Node) -> f64>(f: &F, a: f64, b: f64, at_left: bool, p: f64, tol: Tol) -> Result<Estimate> {
    if !(p > -1.0) {
        return Err(FgfError::Divergent(format!("endpoint exponent {p} ≤ −1")));
    }
    let m = 1.0 / (1.0 + p);
    let len = b - a;
    let g = |n: Node| {
        let v = n.da;
        if v <= 0.0 {
            return 0.0;
        }
        let off = len * v.powf(m);
        if off < f64::MIN_POSITIVE {
            // underflow: the skipped mass is O(1e-308^{1+p})
            return 0.0;
        }
        let node = if at_left {
            Node {
                x: a + off,
                a,
                da: off,
                b,
                db: len - off,
            }
        } else {
            Node {
                x: b - off,
                a,
                da: len - off,
                b,
                db: off,
            }
        };
        f(node) * len * m * v.powf(m - 1.0)
    };
    tanh_sinh(&g, 0.0, 1.0, tol)
}

/// Like [`integrate`], but pieces that end at one of the listed singular
/// points (with their exponents) use [`integrate_power_end`].
pub fn integrate_with_singularities<F: Fn(Node) -> f64>(
    f: F,
    points: &[f64],
    singular: &[(f64, f64)],
    tol: Tol,
) -> Result<Estimate> {
    let strong = |x: f64| singular.iter().find(|(q, p)| *q == x && *p < 0.0).map(|(_, p)| *p);
    let mut pts: Vec<f64> = points.to_vec();
    pts.dedup();
    let pieces = (pts.len().max(2) - 1) as f64;
    let piece_tol = Tol::new(tol.abs / pieces, tol.rel);
    let mut total = Estimate::ZERO;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let est = match (a.is_finite() && b.is_finite(), strong(a), strong(b)) {
            (true, Some(pa), Some(pb)) => {
                let mid = 0.5 * (a + b);
                integrate_power_end(&f, a, mid, true, pa, piece_tol)? + integrate_power_end(&f, mid, b, false, pb, piece_tol)?
            }
            (true, Some(pa), None) => integrate_power_end(&f, a, b, true, pa, piece_tol)?,
            (true, None, Some(pb)) => integrate_power_end(&f, a, b, false, pb, piece_tol)?,
            _ => integrate(&f, &[a, b], piece_tol)?,
        };
        total = total + est;
    }
    Ok(total)
}

/// Gauss–Legendre nodes and weights on [−1, 1] (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const TIGHT: Tol = Tol::new(1e-13, 1e-12);

    #[test]
    fn gauss_legendre_exact_to_degree() {
        for n in [1, 2, 5, 10] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            let deg = 2 * n - 2;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert_relative_eq!(q, 2.0 / (deg as f64 + 1.0), max_relative = 1e-13);
        }
    }

    #[test]
    fn strong_endpoint_singularity() {
        // ∫_0^2 x^{-0.9} dx and its mirror
        let want = 2f64.powf(0.1) / 0.1;
        let e = integrate_power_end(&|n: Node| n.da.powf(-0.9), 0.0, 2.0, true, -0.9, TIGHT).unwrap();
        assert_relative_eq!(e.value, want, max_relative = 1e-12);
        let e = integrate_power_end(&|n: Node| n.db.powf(-0.9), -2.0, 0.0, false, -0.9, TIGHT).unwrap();
        assert_relative_eq!(e.value, want, max_relative = 1e-12);
        let e = integrate_with_singularities(|n: Node| n.dist(0.0).powf(-0.9), &[-2.0, 0.0, 2.0], &[(0.0, -0.9)], TIGHT).unwrap();
        assert_relative_eq!(e.value, 2.0 * want, max_relative = 1e-12);
    }

    #[test]
    fn polynomial_exact() {
        let e = integrate_fn(|x| x * x, &[0.0, 3.0], TIGHT).unwrap();
        assert_relative_eq!(e.value, 9.0, max_relative = 1e-13);
    }

    #[test]
    fn endpoint_power_singularity() {
        // ∫_0^1 x^{-0.9} dx = 10
        let e = integrate(|n: Node| n.da.powf(-0.9), &[0.0, 1.0], TIGHT).unwrap();
        assert_relative_eq!(e.value, 10.0, max_relative = 1e-10);
    }

    #[test]
    fn singularity_away_from_origin() {
        // ∫_0^{1} |1 − u|^{-0.9} du = 10, singular at u = 1 where 1 − u underflows in x
        let e = integrate(|n: Node| n.dist(1.0).powf(-0.9), &[0.0, 1.0], TIGHT).unwrap();
        assert_relative_eq!(e.value, 10.0, max_relative = 1e-10);
        let e = integrate(|n: Node| n.dist(7.25).powf(-0.9), &[6.25, 7.25, 8.25], TIGHT).unwrap();
        assert_relative_eq!(e.value, 20.0, max_relative = 1e-10);
    }

    #[test]
    fn log_singularity() {
        // ∫_0^1 ln x dx = −1
        let e = integrate(|n: Node| n.da.ln(), &[0.0, 1.0], TIGHT).unwrap();
        assert_relative_eq!(e.value, -1.0, max_relative = 1e-11);
    }

    #[test]
    fn half_lines() {
        // ∫_1^∞ x^{-2.9} = 1/1.9
        let e = integrate_fn(|x| x.powf(-2.9), &[1.0, f64::INFINITY], TIGHT).unwrap();
        assert_relative_eq!(e.value, 1.0 / 1.9, max_relative = 1e-10);
        // ∫_ℝ e^{-x²/2} = √(2π)
        let e = integrate_fn(
            |x| (-0.5 * x * x).exp(),
            &[f64::NEG_INFINITY, 0.0, f64::INFINITY],
            TIGHT,
        )
        .unwrap();
        assert_relative_eq!(e.value, (2.0 * PI).sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn kronrod_oscillatory() {
        let e = gauss_kronrod(|x: f64| x.cos(), 0.0, 40.0 * PI + 1.0, 8, TIGHT, 1000).unwrap();
        assert_relative_eq!(e.value, (1.0f64).sin(), max_relative = 1e-11);
    }

    #[test]
    fn kronrod_reports_failure() {
        let r = gauss_kronrod(|x: f64| 1.0 / x, 0.0, 1.0, 1, TIGHT, 50);
        assert!(matches!(r, Err(FgfError::Quadrature { .. })));
    }

    #[test]
    fn panels_extrapolate_power_tail() {
        // ∫_0^∞ (1+x)^{-1.1} dx = 10
        let e = semi_infinite_panels(&|n: Node| (1.0 + n.x).powf(-1.1), 0.0, 1.0, Tol::new(1e-9, 1e-9)).unwrap();
        assert_relative_eq!(e.value, 10.0, max_relative = 1e-6);
    }

    #[test]
    fn panels_detect_divergence() {
        let r = semi_infinite_panels(&|n: Node| n.x.powf(0.8) * (1.0 + n.x).powf(-1.1), 0.0, 1.0, Tol::new(1e-9, 1e-9));
        assert!(matches!(r, Err(FgfError::Divergent(_))));
    }
}
