//! Multiplicative chaos M^H_γ on grid cells, the good-point split M = I + L,
//! the threshold γ*(d) and Monte Carlo convergence diagnostics as H ↓ 0.

use crate::constants::HurstParam;
use crate::covariance::{CovarianceModel, CrossCovariance};
use crate::error::{FgfError, Result};
use crate::kernels::NormalizingKernel;
use crate::report::{DiagnosticReport, Entry};
use crate::sampler::{hurst_position, FieldSample, GridSpec, JointField};
use crate::stats::{difference, KahanSum, MeanEstimate};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest exponent that still exponentiates to a finite f64.
const LOG_MAX: f64 = 709.78;

/// S_{H,H̄} = {H + 1/n : 1/(H̄ − H) < n ≤ 1/H}, descending. Empty once
/// H ≥ H̄/2, in which case the good-point mask is vacuous.
pub fn hurst_grid_s(hurst: HurstParam, hbar: HurstParam) -> Result<Vec<HurstParam>> {
    let (h, hb) = (hurst.value(), hbar.value());
    if h >= hb {
        return Err(FgfError::Precondition(format!("need H < H̄, got H = {h}, H̄ = {hb}")));
    }
    let lo = (1.0 / (hb - h) + 1e-9).floor() as u64 + 1;
    let hi = (1.0 / h + 1e-9).floor() as u64;
    (lo..=hi).map(|n| HurstParam::new(h + 1.0 / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    M,
    I,
    L,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodPointMask {
    pub good: Vec<bool>,
    pub hurst: f64,
    pub hbar: f64,
    pub alpha: f64,
    pub s_grid: Vec<f64>,
}

impl GoodPointMask {
    pub fn fraction(&self) -> f64 {
        self.good.iter().filter(|g| **g).count() as f64 / self.good.len() as f64
    }
}

/// Per-cell masses of one of M, I, L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosMeasure {
    pub variant: Variant,
    pub gamma: f64,
    pub hurst: f64,
    pub masses: Vec<f64>,
    /// (α, H̄) for I and L.
    pub good_points: Option<(f64, f64)>,
    /// Cells whose mass overflowed and was clamped to f64::MAX.
    pub saturated: usize,
}

impl ChaosMeasure {
    pub fn total(&self) -> f64 {
        self.masses.iter().copied().collect::<KahanSum>().value()
    }
}

/// What to build from a joint draw: M^H_γ and its split at threshold α over S_{H,H̄}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub hurst: HurstParam,
    pub hbar: HurstParam,
    pub gamma: f64,
    pub alpha: f64,
}

impl MeasureSpec {
    pub fn new(hurst: HurstParam, hbar: HurstParam, gamma: f64, alpha: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(FgfError::Domain {
                name: "gamma",
                value: gamma,
                range: "[0, ∞)",
            });
        }
        if !(alpha > 0.0) {
            return Err(FgfError::Domain {
                name: "alpha",
                value: alpha,
                range: "(0, ∞)",
            });
        }
        hurst_grid_s(hurst, hbar)?;
        Ok(Self {
            hurst,
            hbar,
            gamma,
            alpha,
        })
    }

    pub fn s_grid(&self) -> Vec<HurstParam> {
        hurst_grid_s(self.hurst, self.hbar).unwrap_or_default()
    }

    /// H followed by S_{H,H̄}.
    pub fn hursts(&self) -> Vec<HurstParam> {
        std::iter::once(self.hurst).chain(self.s_grid()).collect()
    }
}

/// Union of the Hurst indices the specs need, in first-seen order.
pub fn joint_hursts(specs: &[MeasureSpec]) -> Vec<HurstParam> {
    let mut out: Vec<HurstParam> = Vec::new();
    for h in specs.iter().flat_map(MeasureSpec::hursts) {
        if hurst_position(&out, h.value()).is_none() {
            out.push(h);
        }
    }
    out
}

/// Totals of M, I and L over the grid for one draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MassTotals {
    pub m: f64,
    pub i: f64,
    pub l: f64,
    /// I on the grid coarsened by two (every other 1-D cell, double volume).
    pub i_coarse: f64,
    pub good_fraction: f64,
    pub saturated: usize,
}

/// A spec resolved against the row layout of a joint field.
#[derive(Debug, Clone)]
struct Resolved {
    spec: MeasureSpec,
    row: usize,
    /// (row, threshold α/(h+H)) for every h ∈ S.
    tests: Vec<(usize, f64)>,
    half_var: Vec<f64>,
    log_v: f64,
    coarse: bool,
    n: usize,
}

impl Resolved {
    fn new(spec: MeasureSpec, hursts: &[HurstParam], variances: &dyn Fn(usize, usize) -> f64, grid: &GridSpec) -> Result<Self> {
        let find = |h: HurstParam| hurst_position(hursts, h.value()).ok_or(FgfError::MissingHurst(h.value()));
        let row = find(spec.hurst)?;
        let s = spec.s_grid();
        if s.is_empty() {
            log::warn!(
                "S grid is empty for H = {}, H̄ = {}: every point counts as good",
                spec.hurst,
                spec.hbar
            );
        }
        let tests = s
            .iter()
            .map(|&h| Ok((find(h)?, spec.alpha / (h.value() + spec.hurst.value()))))
            .collect::<Result<Vec<_>>>()?;
        let n = grid.len();
        let coarse = matches!(grid, GridSpec::Tensor { axes, .. } if axes.len() == 1 && n.is_multiple_of(2));
        Ok(Self {
            spec,
            row,
            tests,
            half_var: (0..n).map(|i| 0.5 * variances(row, i)).collect(),
            log_v: grid.cell_volume().ln(),
            coarse,
            n,
        })
    }

    fn good(&self, col: &[f64], i: usize) -> bool {
        self.tests.iter().all(|&(k, thr)| col[k * self.n + i] <= thr)
    }

    /// log v + γX − γ²/2·Var X, exponentiated with saturation.
    fn mass(&self, col: &[f64], i: usize) -> (f64, bool) {
        let g = self.spec.gamma;
        if g == 0.0 {
            return (self.log_v.exp(), false);
        }
        let e = self.log_v + g * col[self.row * self.n + i] - g * g * self.half_var[i];
        if e > LOG_MAX {
            (f64::MAX, true)
        } else {
            (e.exp(), false)
        }
    }

    fn cells(&self, col: &[f64]) -> (Vec<f64>, Vec<bool>, usize) {
        let mut sat = 0;
        let (m, good): (Vec<f64>, Vec<bool>) = (0..self.n)
            .map(|i| {
                let (v, s) = self.mass(col, i);
                sat += s as usize;
                (v, self.good(col, i))
            })
            .unzip();
        (m, good, sat)
    }

    fn totals(&self, col: &[f64]) -> MassTotals {
        let (m, good, saturated) = self.cells(col);
        let (mut tm, mut ti, mut tl, mut tc) = (KahanSum::default(), KahanSum::default(), KahanSum::default(), KahanSum::default());
        for (idx, (v, g)) in m.iter().zip(&good).enumerate() {
            tm.add(*v);
            if *g {
                ti.add(*v);
                if idx % 2 == 0 {
                    tc.add(2.0 * v);
                }
            } else {
                tl.add(*v);
            }
        }
        MassTotals {
            m: tm.value(),
            i: ti.value(),
            l: tl.value(),
            i_coarse: if self.coarse { tc.value() } else { f64::NAN },
            good_fraction: good.iter().filter(|g| **g).count() as f64 / self.n as f64,
            saturated,
        }
    }
}

fn resolve(field: &JointField, spec: MeasureSpec) -> Result<Resolved> {
    Resolved::new(spec, field.hursts(), &|k, i| field.variance(k, i), field.grid())
}

/// Mask of good points in one joint draw.
pub fn good_point_mask(draw: &FieldSample, hurst: HurstParam, hbar: HurstParam, alpha: f64) -> Result<GoodPointMask> {
    if !(alpha > 0.0) {
        return Err(FgfError::Domain {
            name: "alpha",
            value: alpha,
            range: "(0, ∞)",
        });
    }
    let spec = MeasureSpec::new(hurst, hbar, 0.0, alpha)?;
    let r = Resolved::new(spec, &draw.hursts, &|_, _| 0.0, &draw.grid)?;
    Ok(GoodPointMask {
        good: (0..r.n).map(|i| r.good(&draw.values, i)).collect(),
        hurst: hurst.value(),
        hbar: hbar.value(),
        alpha,
        s_grid: spec.s_grid().iter().map(|h| h.value()).collect(),
    })
}

/// M, I and L from one joint draw of the field that produced it.
pub fn build_measures(field: &JointField, draw: &FieldSample, spec: MeasureSpec) -> Result<[ChaosMeasure; 3]> {
    if draw.values.len() != field.dim() {
        return Err(FgfError::Precondition("draw does not come from this field".into()));
    }
    let r = resolve(field, spec)?;
    let (m, good, saturated) = r.cells(&draw.values);
    if saturated > 0 {
        log::warn!("{saturated} cell masses saturated at f64::MAX");
    }
    let split = |keep: bool| -> Vec<f64> { m.iter().zip(&good).map(|(v, g)| if *g == keep { *v } else { 0.0 }).collect() };
    let base = |variant, masses| ChaosMeasure {
        variant,
        gamma: spec.gamma,
        hurst: spec.hurst.value(),
        masses,
        good_points: (variant != Variant::M).then_some((spec.alpha, spec.hbar.value())),
        saturated,
    };
    Ok([base(Variant::M, m.clone()), base(Variant::I, split(true)), base(Variant::L, split(false))])
}

/// Per-replicate totals for every spec, replicates in order.
pub fn simulate_totals(field: &JointField, specs: &[MeasureSpec], seed: u64, replicates: usize) -> Result<Vec<Vec<MassTotals>>> {
    let resolved = specs.iter().map(|s| resolve(field, *s)).collect::<Result<Vec<_>>>()?;
    let dim = field.dim();
    let batches = field.gaussian().map_batches(seed, replicates, |_, mat| {
        let data = mat.as_slice();
        (0..mat.ncols())
            .map(|c| {
                let col = &data[c * dim..(c + 1) * dim];
                resolved.iter().map(|r| r.totals(col)).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    });
    Ok(batches.into_iter().flatten().collect())
}

/// f(κ) = 2(1 − e^{−κ})²/(κ(2 − e^{−2κ})).
pub fn f_kappa(kappa: f64) -> f64 {
    let e = (-kappa).exp_m1();
    2.0 * e * e / (kappa * (2.0 - (-2.0 * kappa).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaStarResult {
    pub kappa_star: f64,
    pub xi_bar: f64,
    pub gamma_star: f64,
    pub dim: usize,
}

/// κ* = argmax f on (0, 10] by golden-section search, ξ̄ = f(κ*) and
/// γ*(d) = √(d/(1 − ξ̄)).
pub fn gamma_star(d: usize) -> Result<GammaStarResult> {
    if d == 0 {
        return Err(FgfError::Domain {
            name: "d",
            value: 0.0,
            range: "positive integers",
        });
    }
    debug_assert!(f_kappa_unimodal());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-6, 10.0);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (f_kappa(c), f_kappa(e));
    while b - a > 1e-12 {
        if fc > fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = f_kappa(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = f_kappa(e);
        }
    }
    let kappa_star = 0.5 * (a + b);
    let xi_bar = f_kappa(kappa_star);
    Ok(GammaStarResult {
        kappa_star,
        xi_bar,
        gamma_star: (d as f64 / (1.0 - xi_bar)).sqrt(),
        dim: d,
    })
}

/// The difference quotient of f changes sign exactly once on (0, 10].
pub fn f_kappa_unimodal() -> bool {
    let xs: Vec<f64> = (1..=10_000).map(|i| i as f64 * 1e-3).collect();
    let signs: Vec<bool> = xs.windows(2).map(|w| f_kappa(w[1]) > f_kappa(w[0])).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count() == 1
}

/// Fits Var X^h(x) ≤ (1 + c₁)(1/(2h) + c₂), choosing c₂ on a log grid to
/// minimize (1 + c₁)(1 + c₂), the factor that enters β.
pub fn fit_variance_constants(samples: &[(f64, f64)]) -> (f64, f64) {
    let c1_for = |c2: f64| {
        samples
            .iter()
            .map(|&(h, v)| v / (0.5 / h + c2))
            .fold(f64::NEG_INFINITY, f64::max)
            - 1.0
    };
    (0..=400)
        .map(|k| 10f64.powf(-4.0 + k as f64 * 0.02))
        .map(|c2| (c1_for(c2).max(1e-12), c2))
        .min_by(|a, b| ((1.0 + a.0) * (1.0 + a.1)).total_cmp(&((1.0 + b.0) * (1.0 + b.1))))
        .unwrap_or((f64::NAN, f64::NAN))
}

/// Var X^h(x) over the grid and the given Hurst indices, fitted as in
/// `fit_variance_constants`.
pub fn variance_constants(cfg: &ChaosConfig, hursts: &[HurstParam]) -> Result<(f64, f64)> {
    let pts = cfg.grid.points();
    let mut samples = Vec::with_capacity(hursts.len() * pts.len());
    for &h in hursts {
        let c = CrossCovariance::new(h, h, &cfg.kernel, &cfg.model)?;
        for x in &pts {
            samples.push((h.value(), c.cov(x, x)?));
        }
    }
    Ok(fit_variance_constants(&samples))
}

/// p̄ = Σ_{n ≥ [1/H̄]−1} e^{−βn/2} with β = α²/(8(c₁+1)(c₂+1)).
pub fn bad_point_bound(alpha: f64, hbar: f64, c1: f64, c2: f64) -> f64 {
    let beta = alpha * alpha / (8.0 * (c1 + 1.0) * (c2 + 1.0));
    let n0 = ((1.0 / hbar).floor() - 1.0).max(0.0);
    let q = (-beta / 2.0).exp();
    q.powf(n0) / (1.0 - q)
}

/// Inputs shared by the Monte Carlo diagnostics.
#[derive(Debug, Clone)]
pub struct ChaosConfig {
    pub grid: GridSpec,
    pub kernel: Arc<NormalizingKernel>,
    pub model: CovarianceModel,
    pub gamma: f64,
    pub alpha: f64,
    pub hbar: HurstParam,
    pub replicates: usize,
    pub seed: u64,
}

impl ChaosConfig {
    fn spec(&self, h: HurstParam) -> Result<MeasureSpec> {
        MeasureSpec::new(h, self.hbar, self.gamma, self.alpha)
    }

    fn field(&self, specs: &[MeasureSpec]) -> Result<JointField> {
        JointField::normalized(self.grid.clone(), joint_hursts(specs), self.kernel.clone(), self.model)
    }

    fn check_gamma(&self) -> Result<()> {
        let g = gamma_star(self.model.dim)?.gamma_star;
        if self.gamma >= g {
            return Err(FgfError::Precondition(format!("γ = {} is not below γ*({}) = {g}", self.gamma, self.model.dim)));
        }
        Ok(())
    }
}

fn column<F: Fn(&MassTotals) -> f64>(t: &[Vec<MassTotals>], k: usize, f: F) -> Vec<f64> {
    t.iter().map(|r| f(&r[k])).collect()
}

/// E[I(A)²] with its standard error.
pub fn second_moment_i(cfg: &ChaosConfig, hurst: HurstParam) -> Result<MeanEstimate> {
    cfg.check_gamma()?;
    let spec = cfg.spec(hurst)?;
    let field = cfg.field(&[spec])?;
    let t = simulate_totals(&field, &[spec], cfg.seed, cfg.replicates)?;
    Ok(MeanEstimate::from_slice(&column(&t, 0, |x| x.i * x.i)))
}

fn per_h_entries(report: &mut DiagnosticReport, t: &[Vec<MassTotals>], k: usize, spec: &MeasureSpec, area: f64) {
    let h = spec.hurst;
    if spec.s_grid().is_empty() {
        report.warn(format!("H={h}: S is empty for H̄={}, every point counts as good", spec.hbar));
    }
    let m = MeanEstimate::from_slice(&column(t, k, |x| x.m));
    let i2 = MeanEstimate::from_slice(&column(t, k, |x| x.i * x.i));
    let l = MeanEstimate::from_slice(&column(t, k, |x| x.l));
    let g = MeanEstimate::from_slice(&column(t, k, |x| x.good_fraction));
    report.push(Entry::info(format!("H={h} mean mass M(A)"), m.mean).with_se(m.se).check(m.within(area, 3.0)));
    if spec.gamma == 0.0 {
        let worst = column(t, k, |x| (x.m - area).abs()).into_iter().fold(0.0, f64::max);
        report.push(Entry::info(format!("H={h} max |M(A) - |A|| at gamma=0"), worst).against(0.0, 1e-12 * area.max(1.0)));
    }
    report.push(Entry::info(format!("H={h} E[I(A)^2]"), i2.mean).with_se(i2.se));
    report.push(Entry::info(format!("H={h} E[L(A)]"), l.mean).with_se(l.se));
    report.push(Entry::info(format!("H={h} P(good)"), g.mean).with_se(g.se));
    let coarse = column(t, k, |x| x.i_coarse);
    if coarse.iter().all(|v| v.is_finite()) {
        let c = MeanEstimate::from_slice(&column(t, k, |x| x.i_coarse * x.i_coarse));
        report.push(Entry::info(format!("H={h} E[I(A)^2] refinement delta"), i2.mean - c.mean));
    }
    let sat: usize = t.iter().map(|r| r[k].saturated).sum();
    if sat > 0 {
        report.warn(format!("H={h}: {sat} saturated cell masses"));
    }
}

/// Per-replicate totals of one jointly sampled ladder pair. A one-step
/// ladder yields a single entry with `other == hurst` and one column.
#[derive(Debug, Clone)]
pub struct PairTotals {
    pub hurst: HurstParam,
    pub other: HurstParam,
    /// [replicate][0 for H, 1 for H'].
    pub totals: Vec<Vec<MassTotals>>,
}

/// L² gaps E[(I^H − I^{H'})²] and L¹ gaps E|M^H − M^{H'}| for consecutive
/// pairs of a descending ladder. Each pair is sampled jointly, together
/// with both S-grids. The exact L² gaps of the Riemann-sum M are reported
/// next to the Monte Carlo ones.
pub fn cauchy_diagnostic(cfg: &ChaosConfig, ladder: &[HurstParam]) -> Result<DiagnosticReport> {
    Ok(cauchy_run(cfg, ladder)?.0)
}

pub fn cauchy_run(cfg: &ChaosConfig, ladder: &[HurstParam]) -> Result<(DiagnosticReport, Vec<PairTotals>)> {
    cfg.check_gamma()?;
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1].value() >= w[0].value()) {
        return Err(FgfError::Precondition("Hurst ladder must be nonempty and strictly descending".into()));
    }
    let area = cfg.grid.cell_volume() * cfg.grid.len() as f64;
    let mut report = DiagnosticReport::new();
    let mut gaps: Vec<MeanEstimate> = Vec::new();
    let mut exact: Vec<f64> = Vec::new();
    let mut pairs = Vec::new();
    if let [h] = ladder {
        let spec = cfg.spec(*h)?;
        let t = simulate_totals(&cfg.field(&[spec])?, &[spec], cfg.seed, cfg.replicates)?;
        per_h_entries(&mut report, &t, 0, &spec, area);
        pairs.push(PairTotals {
            hurst: *h,
            other: *h,
            totals: t,
        });
        push_variance_constants(&mut report, cfg, &[spec])?;
        return Ok((report, pairs));
    }
    for (p, w) in ladder.windows(2).enumerate() {
        let specs = [cfg.spec(w[0])?, cfg.spec(w[1])?];
        let field = cfg.field(&specs)?;
        log::info!("pair ({}, {}): joint dimension {}", w[0], w[1], field.dim());
        let t = simulate_totals(&field, &specs, cfg.seed.wrapping_add(p as u64), cfg.replicates)?;
        if p == 0 {
            per_h_entries(&mut report, &t, 0, &specs[0], area);
        }
        per_h_entries(&mut report, &t, 1, &specs[1], area);
        let l2 = MeanEstimate::from_slice(&t.iter().map(|r| (r[0].i - r[1].i).powi(2)).collect::<Vec<_>>());
        let l1 = MeanEstimate::from_slice(&t.iter().map(|r| (r[0].m - r[1].m).abs()).collect::<Vec<_>>());
        report.push(Entry::info(format!("L2 gap I({},{})", w[0], w[1]), l2.mean).with_se(l2.se));
        report.push(Entry::info(format!("L1 gap M({},{})", w[0], w[1]), l1.mean).with_se(l1.se));
        let (_, _, e) = exact_m_moments(cfg, w[0], w[1])?;
        report.push(Entry::info(format!("exact L2 gap M({},{})", w[0], w[1]), e));
        gaps.push(l2);
        exact.push(e);
        pairs.push(PairTotals {
            hurst: w[0],
            other: w[1],
            totals: t,
        });
    }
    for (k, w) in gaps.windows(2).enumerate() {
        let (d, se) = difference(&w[1], &w[0]);
        report.push(
            Entry::info(format!("L2 gap trend {}→{}", k, k + 1), d)
                .with_se(se)
                .check(d <= 2.0 * se),
        );
    }
    for (k, w) in exact.windows(2).enumerate() {
        report.push(Entry::info(format!("exact L2 gap trend {}→{}", k, k + 1), w[1] - w[0]).check(w[1] <= w[0]));
    }
    let specs = ladder.iter().map(|&h| cfg.spec(h)).collect::<Result<Vec<_>>>()?;
    push_variance_constants(&mut report, cfg, &specs)?;
    Ok((report, pairs))
}

fn push_variance_constants(report: &mut DiagnosticReport, cfg: &ChaosConfig, specs: &[MeasureSpec]) -> Result<()> {
    let (c1, c2) = variance_constants(cfg, &joint_hursts(specs))?;
    report.push(Entry::info("fitted c1 in Var X^h <= (1+c1)(1/(2h)+c2)", c1));
    report.push(Entry::info("fitted c2 in Var X^h <= (1+c1)(1/(2h)+c2)", c2));
    report.push(Entry::info("bad-point bound p̄", bad_point_bound(cfg.alpha, cfg.hbar.value(), c1, c2)));
    Ok(())
}

/// Exact second moments of the Riemann-sum measures M^H(A), M^{H'}(A):
/// E[M^a M^b] = v²Σᵢⱼ exp(γ²cov(X^a(xᵢ), X^b(xⱼ))). Returns
/// (E[(M^H)²], E[(M^{H'})²], E[(M^H − M^{H'})²]).
pub fn exact_m_moments(cfg: &ChaosConfig, hurst: HurstParam, other: HurstParam) -> Result<(f64, f64, f64)> {
    let pts = cfg.grid.points();
    let v = cfg.grid.cell_volume();
    let g2 = cfg.gamma * cfg.gamma;
    let cross = |a: HurstParam, b: HurstParam| -> Result<f64> {
        let c = CrossCovariance::new(a, b, &cfg.kernel, &cfg.model)?;
        let mut s = KahanSum::default();
        for x in &pts {
            for y in &pts {
                s.add((g2 * c.cov(x, y)?).exp());
            }
        }
        Ok(v * v * s.value())
    };
    let (aa, bb, ab) = (cross(hurst, hurst)?, cross(other, other)?, cross(hurst, other)?);
    Ok((aa, bb, aa + bb - 2.0 * ab))
}

/// Good-point statistics for one H across threshold multipliers α/γ,
/// computed on a single set of draws.
pub fn alpha_sweep(cfg: &ChaosConfig, hurst: HurstParam, multipliers: &[f64]) -> Result<DiagnosticReport> {
    let specs = multipliers
        .iter()
        .map(|m| MeasureSpec::new(hurst, cfg.hbar, cfg.gamma, m * cfg.gamma.max(f64::MIN_POSITIVE)))
        .collect::<Result<Vec<_>>>()?;
    let field = cfg.field(&specs)?;
    let t = simulate_totals(&field, &specs, cfg.seed, cfg.replicates)?;
    let mut report = DiagnosticReport::new();
    for (k, m) in multipliers.iter().enumerate() {
        let l = MeanEstimate::from_slice(&column(&t, k, |x| x.l));
        let i2 = MeanEstimate::from_slice(&column(&t, k, |x| x.i * x.i));
        report.push(Entry::info(format!("alpha={m}γ E[L(A)]"), l.mean).with_se(l.se));
        report.push(Entry::info(format!("alpha={m}γ E[I(A)^2]"), i2.mean).with_se(i2.se));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::nr_kernel;

    fn hp(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    fn values(s: &[HurstParam]) -> Vec<f64> {
        s.iter().map(|h| h.value()).collect()
    }

    #[test]
    fn s_grid_enumeration() {
        let s = values(&hurst_grid_s(hp(0.1), hp(0.4)).unwrap());
        let want = [0.35, 0.3, 0.1 + 1.0 / 6.0, 0.1 + 1.0 / 7.0, 0.225, 0.1 + 1.0 / 9.0, 0.2];
        assert_eq!(s.len(), want.len());
        s.iter().zip(want).for_each(|(a, b)| assert!((a - b).abs() < 1e-14));
        assert!(hurst_grid_s(hp(0.3), hp(0.4)).unwrap().is_empty());
        assert!(hurst_grid_s(hp(0.4), hp(0.3)).is_err());
    }

    #[test]
    fn s_grid_bounds_hold_on_a_sweep() {
        for i in 1..40 {
            for j in 1..=i {
                let hb = 0.01 * i as f64;
                let h = hb / 2.0 * j as f64 / i as f64;
                for s in hurst_grid_s(hp(h), hp(hb)).unwrap() {
                    assert!(s.value() >= 2.0 * h - 1e-12 && s.value() <= hb + 1e-12);
                }
            }
        }
    }

    #[test]
    fn s_grid_at_half_hbar_is_empty() {
        // 1/(H̄ − H) = 1/H when H = H̄/2, leaving no admissible n
        for hb in [0.4, 0.3, 0.2, 0.1] {
            assert!(hurst_grid_s(hp(hb / 2.0), hp(hb)).unwrap().is_empty());
        }
    }

    #[test]
    fn gamma_star_values() {
        let g = gamma_star(1).unwrap();
        assert!((g.kappa_star - 1.0370).abs() < 1e-3);
        assert!((g.xi_bar - 0.42872).abs() < 1e-4);
        assert!((g.gamma_star - 1.3230).abs() < 1e-3);
        for d in 1..=3 {
            assert!(gamma_star(d).unwrap().gamma_star > (1.75 * d as f64).sqrt());
        }
        assert!(f_kappa_unimodal());
    }

    #[test]
    fn variance_constant_fit_dominates() {
        let data: Vec<(f64, f64)> = [0.05, 0.1, 0.2].iter().map(|&h| (h, 1.1 * (0.5 / h + 0.3))).collect();
        let (c1, c2) = fit_variance_constants(&data);
        assert!(data.iter().all(|&(h, v)| v <= (1.0 + c1) * (0.5 / h + c2) * (1.0 + 1e-12)));
        assert!((1.0 + c1) * (1.0 + c2) <= 1.1 * 1.3 + 1e-9);
    }

    fn small_field(h: f64, hbar: f64) -> (JointField, MeasureSpec) {
        let psi = Arc::new(nr_kernel(1.0 / 64.0, 1.0).unwrap());
        let spec = MeasureSpec::new(hp(h), hp(hbar), 1.0, 2.0).unwrap();
        let grid = GridSpec::cells(0.2, 1.0, 8).unwrap();
        (JointField::normalized(grid, spec.hursts(), psi, CovarianceModel::mvn()).unwrap(), spec)
    }

    #[test]
    fn split_is_exact_per_cell() {
        let (field, spec) = small_field(0.05, 0.3);
        for draw in field.samples(1, 50) {
            let [m, i, l] = build_measures(&field, &draw, spec).unwrap();
            for k in 0..m.masses.len() {
                assert_eq!(m.masses[k], i.masses[k] + l.masses[k]);
                assert!(i.masses[k] >= 0.0 && l.masses[k] >= 0.0);
            }
        }
    }

    #[test]
    fn gamma_zero_is_lebesgue() {
        let (field, spec) = small_field(0.1, 0.4);
        let spec = MeasureSpec { gamma: 0.0, ..spec };
        let draw = &field.samples(2, 1)[0];
        let [m, ..] = build_measures(&field, draw, spec).unwrap();
        assert!(m.masses.iter().all(|v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn huge_alpha_keeps_everything() {
        let (field, spec) = small_field(0.05, 0.3);
        let draw = &field.samples(3, 1)[0];
        let mask = good_point_mask(draw, spec.hurst, spec.hbar, 1e6).unwrap();
        assert!(mask.good.iter().all(|g| *g));
        assert_eq!(mask.s_grid.len(), 16);
    }

    #[test]
    fn masks_nested_in_alpha_and_hbar() {
        let (field, _) = small_field(0.05, 0.3);
        for draw in field.samples(4, 40) {
            let m1 = good_point_mask(&draw, hp(0.05), hp(0.3), 1.0).unwrap();
            let m2 = good_point_mask(&draw, hp(0.05), hp(0.3), 2.0).unwrap();
            let m3 = good_point_mask(&draw, hp(0.05), hp(0.2), 1.0).unwrap();
            for k in 0..m1.good.len() {
                assert!(!m1.good[k] || m2.good[k]);
                // fewer constraints with the smaller H̄
                assert!(!m1.good[k] || m3.good[k]);
            }
        }
    }

    #[test]
    fn missing_hurst_reported() {
        let (field, _) = small_field(0.1, 0.4);
        let draw = &field.samples(5, 1)[0];
        assert!(matches!(
            good_point_mask(draw, hp(0.05), hp(0.3), 2.0),
            Err(FgfError::MissingHurst(_))
        ));
    }

    #[test]
    fn empty_s_means_all_good() {
        let psi = Arc::new(nr_kernel(1.0 / 64.0, 1.0).unwrap());
        let spec = MeasureSpec::new(hp(0.2), hp(0.4), 1.0, 0.01).unwrap();
        assert!(spec.s_grid().is_empty());
        let grid = GridSpec::cells(0.2, 1.0, 4).unwrap();
        let field = JointField::normalized(grid, spec.hursts(), psi, CovarianceModel::mvn()).unwrap();
        let t = simulate_totals(&field, &[spec], 6, 10).unwrap();
        assert!(t.iter().all(|r| r[0].l == 0.0 && r[0].m == r[0].i));
    }

    #[test]
    fn gamma_above_threshold_rejected() {
        let cfg = ChaosConfig {
            grid: GridSpec::cells(0.2, 1.0, 4).unwrap(),
            kernel: Arc::new(nr_kernel(1.0 / 64.0, 1.0).unwrap()),
            model: CovarianceModel::mvn(),
            gamma: 1.4,
            alpha: 2.8,
            hbar: hp(0.3),
            replicates: 10,
            seed: 1,
        };
        assert!(second_moment_i(&cfg, hp(0.1)).is_err());
    }

    #[test]
    fn identical_ladder_pair_has_zero_gap() {
        let (field, spec) = small_field(0.1, 0.4);
        let t = simulate_totals(&field, &[spec, spec], 7, 20).unwrap();
        assert!(t.iter().all(|r| r[0].i == r[1].i));
    }
}
