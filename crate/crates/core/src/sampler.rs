//! Exact joint Gaussian sampling of B^h and X^h over several Hurst indices.
//!
//! The joint Gram matrix is indexed by (hurst k, point i) ↦ k·|grid| + i,
//! factored once, and shared read-only by every replicate. Replicate r
//! draws its normals from the ChaCha8 stream (seed, r), and replicates are
//! processed in fixed batches of [`BATCH`], so the output depends on the
//! seed alone and not on how batches are scheduled.

use crate::constants::HurstParam;
use crate::covariance::{cov_b, CovarianceModel, CrossCovariance, Domain};
use crate::error::{FgfError, Result};
use crate::kernels::{NormalizingKernel, Support};
use crate::special::gamma_pos;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest joint dimension handed to the Cholesky path.
pub const GRAM_CAP: usize = 4096;
/// Replicates per GEMM.
pub const BATCH: usize = 64;
/// Diagonal jitter ladder, in units of trace/n.
const JITTER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// `count` equispaced nodes including both ends.
    Nodes,
    /// Midpoints of `count` equal cells.
    Midpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "lowercase")]
pub enum GridSpec {
    Tensor { axes: Vec<Axis>, placement: Placement },
    /// Explicit points, each standing for a cell of the given volume.
    Scattered { points: Vec<Vec<f64>>, cell_volume: f64 },
}

impl GridSpec {
    pub fn tensor(axes: Vec<Axis>, placement: Placement) -> Result<Self> {
        if axes.is_empty() {
            return Err(FgfError::Precondition("grid needs at least one axis".into()));
        }
        for a in &axes {
            if a.count < 2 || !(a.min.is_finite() && a.max.is_finite() && a.min < a.max) {
                return Err(FgfError::Precondition(format!(
                    "grid axis needs min < max and count ≥ 2, got [{}, {}] × {}",
                    a.min, a.max, a.count
                )));
            }
        }
        Ok(GridSpec::Tensor { axes, placement })
    }

    /// 1-D nodes min, …, max.
    pub fn nodes(min: f64, max: f64, count: usize) -> Result<Self> {
        Self::tensor(vec![Axis { min, max, count }], Placement::Nodes)
    }

    /// 1-D midpoints of `count` cells partitioning [min, max].
    pub fn cells(min: f64, max: f64, count: usize) -> Result<Self> {
        Self::tensor(vec![Axis { min, max, count }], Placement::Midpoints)
    }

    pub fn scattered(points: Vec<Vec<f64>>, cell_volume: f64) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
            return Err(FgfError::Precondition("scattered points need a common positive dimension".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(FgfError::Precondition(format!("duplicate grid point {p:?}: singular Gram matrix")));
            }
        }
        Ok(GridSpec::Scattered { points, cell_volume })
    }

    pub fn dim(&self) -> usize {
        match self {
            GridSpec::Tensor { axes, .. } => axes.len(),
            GridSpec::Scattered { points, .. } => points[0].len(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            GridSpec::Tensor { axes, .. } => axes.iter().map(|a| a.count).product(),
            GridSpec::Scattered { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spacing of a tensor axis.
    pub fn spacing(&self, k: usize) -> Option<f64> {
        match self {
            GridSpec::Tensor { axes, placement } => {
                let a = axes[k];
                let gaps = match placement {
                    Placement::Nodes => a.count - 1,
                    Placement::Midpoints => a.count,
                };
                Some((a.max - a.min) / gaps as f64)
            }
            GridSpec::Scattered { .. } => None,
        }
    }

    pub fn cell_volume(&self) -> f64 {
        match self {
            GridSpec::Tensor { axes, .. } => (0..axes.len()).filter_map(|k| self.spacing(k)).product(),
            GridSpec::Scattered { cell_volume, .. } => *cell_volume,
        }
    }

    /// Points in row-major order (last axis fastest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            GridSpec::Scattered { points, .. } => points.clone(),
            GridSpec::Tensor { axes, placement } => {
                let coords: Vec<Vec<f64>> = axes
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let h = self.spacing(k).unwrap_or(0.0);
                        let off = if *placement == Placement::Midpoints { 0.5 } else { 0.0 };
                        (0..a.count)
                            .map(|i| match placement {
                                Placement::Nodes if i + 1 == a.count => a.max,
                                _ => a.min + (i as f64 + off) * h,
                            })
                            .collect()
                    })
                    .collect();
                let mut out: Vec<Vec<f64>> = vec![vec![]];
                for c in &coords {
                    out = out
                        .into_iter()
                        .flat_map(|p| {
                            c.iter().map(move |&v| {
                                let mut q = p.clone();
                                q.push(v);
                                q
                            })
                        })
                        .collect();
                }
                out
            }
        }
    }

    pub fn check_within(&self, domain: &Domain) -> Result<()> {
        match self.points().into_iter().find(|p| !domain.contains(p)) {
            Some(p) => Err(FgfError::BadDomain(format!("grid point {p:?} lies outside the kernel domain"))),
            None => Ok(()),
        }
    }
}

/// One replicate of one or several jointly sampled fields.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub grid: Arc<GridSpec>,
    pub hursts: Vec<HurstParam>,
    /// Row-major |hursts| × |grid|.
    pub values: Vec<f64>,
    pub seed: u64,
    pub replicate: u64,
    pub model: CovarianceModel,
    /// Present iff the values are normalized fields X^h.
    pub kernel: Option<Arc<NormalizingKernel>>,
}

impl FieldSample {
    pub fn npoints(&self) -> usize {
        self.values.len() / self.hursts.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.npoints();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn hurst_index(&self, h: f64) -> Option<usize> {
        hurst_position(&self.hursts, h)
    }
}

pub(crate) fn hurst_position(hursts: &[HurstParam], h: f64) -> Option<usize> {
    hursts.iter().position(|x| (x.value() - h).abs() <= 1e-12 * h.max(1.0))
}

/// Cholesky factor of a joint Gram matrix. Coordinates with exactly zero
/// variance (B at the origin) are left out and always sampled as 0.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    dim: usize,
    active: Vec<usize>,
    factor: DMatrix<f64>,
    jitter: f64,
}

enum Factor {
    Ok(Vec<f64>),
    Failed { pivot: f64 },
}

/// Row-oriented Cholesky–Banachiewicz on a dense row-major matrix.
fn cholesky_rows(a: &[f64], n: usize, shift: f64) -> Factor {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let (done, rest) = l.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..=i {
            let row_j = if j == i { None } else { Some(&done[j * n..j * n + j]) };
            let s = match row_j {
                Some(rj) => dot(&row_i[..j], rj),
                None => dot(&row_i[..j], &row_i[..j]),
            };
            if j == i {
                let p = a[i * n + i] + shift - s;
                if !(p > 0.0) {
                    return Factor::Failed { pivot: p };
                }
                row_i[i] = p.sqrt();
            } else {
                row_i[j] = (a[i * n + j] - s) / done[j * n + j];
            }
        }
    }
    Factor::Ok(l)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * c + k] * b[4 * c + k];
        }
    }
    let tail: f64 = a[4 * chunks..].iter().zip(&b[4 * chunks..]).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl JointGaussian {
    /// Factors a symmetric row-major Gram matrix, escalating the diagonal
    /// jitter along 1e-12 … 1e-8 × trace/n before giving up.
    pub fn new(gram: &[f64], dim: usize) -> Result<Self> {
        if dim > GRAM_CAP {
            return Err(FgfError::GramTooLarge { dim, cap: GRAM_CAP });
        }
        debug_assert_eq!(gram.len(), dim * dim);
        let active: Vec<usize> = (0..dim).filter(|&i| gram[i * dim + i] > 0.0).collect();
        let n = active.len();
        let sub: Vec<f64> = active
            .iter()
            .flat_map(|&i| active.iter().map(move |&j| gram[i * dim + j]))
            .collect();
        let diag: Vec<f64> = (0..n).map(|i| sub[i * n + i]).collect();
        let trace: f64 = diag.iter().sum();
        let mut last_pivot = 0.0;
        for &j in &JITTER {
            let shift = j * trace / n.max(1) as f64;
            match cholesky_rows(&sub, n, shift) {
                Factor::Ok(l) => {
                    if j > 0.0 {
                        log::info!("Gram matrix needed jitter {shift:e} on the diagonal");
                    }
                    return Ok(Self {
                        dim,
                        active,
                        factor: DMatrix::from_row_slice(n, n, &l),
                        jitter: shift,
                    });
                }
                Factor::Failed { pivot } => last_pivot = pivot,
            }
        }
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
        Err(FgfError::NotPositiveDefinite {
            jitter: JITTER[JITTER.len() - 1] * trace / n as f64,
            min_diag: lo,
            max_diag: hi,
            cond: hi / last_pivot.abs().max(f64::MIN_POSITIVE),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal shift that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Draws for replicates first..first+count, one column each.
    pub fn draw_batch(&self, seed: u64, first: u64, count: usize) -> DMatrix<f64> {
        let n = self.active.len();
        // The product always has BATCH columns: the GEMM rounding depends on
        // the matrix shape, and a replicate must not depend on the batch size.
        let mut z = DMatrix::<f64>::zeros(n, count.max(BATCH));
        for (c, mut col) in z.column_iter_mut().take(count).enumerate() {
            let mut rng = replicate_rng(seed, first + c as u64);
            col.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        }
        let mut y = &self.factor * z;
        if count < BATCH {
            y = y.columns(0, count).into_owned();
        }
        if n == self.dim {
            return y;
        }
        let mut full = DMatrix::<f64>::zeros(self.dim, count);
        for (r, &i) in self.active.iter().enumerate() {
            full.row_mut(i).copy_from(&y.row(r));
        }
        full
    }

    /// Applies `f` to every batch of replicates in parallel and returns the
    /// results in replicate order.
    pub fn map_batches<T, F>(&self, seed: u64, replicates: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &DMatrix<f64>) -> T + Sync,
    {
        let batches = replicates.div_ceil(BATCH);
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let first = (b * BATCH) as u64;
                let count = BATCH.min(replicates - b * BATCH);
                f(first, &self.draw_batch(seed, first, count))
            })
            .collect()
    }
}

/// Joint law of {B^h} or {X^h} on a grid, ready to sample.
#[derive(Debug, Clone)]
pub struct JointField {
    grid: Arc<GridSpec>,
    hursts: Vec<HurstParam>,
    model: CovarianceModel,
    kernel: Option<Arc<NormalizingKernel>>,
    variances: Vec<f64>,
    gaussian: JointGaussian,
}

fn check_hursts(hursts: &[HurstParam]) -> Result<()> {
    if hursts.is_empty() {
        return Err(FgfError::Precondition("need at least one Hurst index".into()));
    }
    for (i, h) in hursts.iter().enumerate() {
        if hurst_position(&hursts[..i], h.value()).is_some() {
            return Err(FgfError::Precondition(format!("Hurst index {h} listed twice")));
        }
    }
    Ok(())
}

/// Fills a symmetric Gram matrix from its upper triangle, rows in parallel.
fn assemble<F>(dim: usize, entry: F) -> Result<Vec<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let rows: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|r| (r..dim).map(|c| entry(r, c)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; dim * dim];
    for (r, row) in rows.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            g[r * dim + r + k] = v;
            g[(r + k) * dim + r] = v;
        }
    }
    Ok(g)
}

impl JointField {
    /// Base fields B^h for every h in `hursts`.
    pub fn base(grid: GridSpec, hursts: Vec<HurstParam>, model: CovarianceModel) -> Result<Self> {
        check_hursts(&hursts)?;
        if grid.dim() != model.dim {
            return Err(FgfError::Precondition("grid and model dimensions differ".into()));
        }
        let dim = hursts.len() * grid.len();
        if dim > GRAM_CAP {
            return Err(FgfError::GramTooLarge { dim, cap: GRAM_CAP });
        }
        let pts = grid.points();
        let n = pts.len();
        let gram = assemble(dim, |r, c| cov_b(&pts[r % n], &pts[c % n], hursts[r / n], hursts[c / n], &model))?;
        Self::finish(grid, hursts, model, None, gram, dim)
    }

    /// Normalized fields X^h = Γ(h)^{1/2}(B^h − ∫B^h ψ) for every h in `hursts`.
    pub fn normalized(
        grid: GridSpec,
        hursts: Vec<HurstParam>,
        psi: Arc<NormalizingKernel>,
        model: CovarianceModel,
    ) -> Result<Self> {
        check_hursts(&hursts)?;
        if grid.dim() != model.dim {
            return Err(FgfError::Precondition("grid and model dimensions differ".into()));
        }
        grid.check_within(psi.domain())?;
        let dim = hursts.len() * grid.len();
        if dim > GRAM_CAP {
            return Err(FgfError::GramTooLarge { dim, cap: GRAM_CAP });
        }
        let m = hursts.len();
        let pairs: Vec<CrossCovariance> = hursts
            .iter()
            .flat_map(|&a| hursts.iter().map(move |&b| (a, b)))
            .map(|(a, b)| CrossCovariance::new(a, b, &psi, &model))
            .collect::<Result<_>>()?;
        let pts = grid.points();
        let n = pts.len();
        let gram = assemble(dim, |r, c| pairs[(r / n) * m + c / n].cov(&pts[r % n], &pts[c % n]))?;
        Self::finish(grid, hursts, model, Some(psi.clone()), gram, dim)
    }

    fn finish(
        grid: GridSpec,
        hursts: Vec<HurstParam>,
        model: CovarianceModel,
        kernel: Option<Arc<NormalizingKernel>>,
        gram: Vec<f64>,
        dim: usize,
    ) -> Result<Self> {
        let variances = (0..dim).map(|i| gram[i * dim + i]).collect();
        let gaussian = JointGaussian::new(&gram, dim)?;
        Ok(Self {
            grid: Arc::new(grid),
            hursts,
            model,
            kernel,
            variances,
            gaussian,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn hursts(&self) -> &[HurstParam] {
        &self.hursts
    }

    pub fn hurst_index(&self, h: f64) -> Option<usize> {
        hurst_position(&self.hursts, h)
    }

    pub fn dim(&self) -> usize {
        self.gaussian.dim()
    }

    pub fn gaussian(&self) -> &JointGaussian {
        &self.gaussian
    }

    /// Analytic variance of field k at grid point i.
    pub fn variance(&self, k: usize, i: usize) -> f64 {
        self.variances[k * self.grid.len() + i]
    }

    fn wrap(&self, seed: u64, replicate: u64, values: Vec<f64>) -> FieldSample {
        FieldSample {
            grid: self.grid.clone(),
            hursts: self.hursts.clone(),
            values,
            seed,
            replicate,
            model: self.model,
            kernel: self.kernel.clone(),
        }
    }

    /// Replicates 0..replicates, in order.
    pub fn samples(&self, seed: u64, replicates: usize) -> Vec<FieldSample> {
        self.gaussian
            .map_batches(seed, replicates, |first, m| {
                m.column_iter()
                    .enumerate()
                    .map(|(c, col)| self.wrap(seed, first + c as u64, col.iter().copied().collect()))
                    .collect::<Vec<_>>()
            })
            .into_iter()
            .flatten()
            .collect()
    }
}

pub fn sample_b(
    grid: GridSpec,
    hursts: Vec<HurstParam>,
    model: CovarianceModel,
    seed: u64,
    replicates: usize,
) -> Result<Vec<FieldSample>> {
    Ok(JointField::base(grid, hursts, model)?.samples(seed, replicates))
}

pub fn sample_x_direct(
    grid: GridSpec,
    hursts: Vec<HurstParam>,
    psi: Arc<NormalizingKernel>,
    model: CovarianceModel,
    seed: u64,
    replicates: usize,
) -> Result<Vec<FieldSample>> {
    Ok(JointField::normalized(grid, hursts, psi, model)?.samples(seed, replicates))
}

/// Pathwise normalization X = Γ(h)^{1/2}(B − Σⱼ wⱼB(uⱼ)) of 1-D base paths,
/// where wⱼ is the ψ(·, x)-mass of the cell around node uⱼ. The weights are
/// computed once per grid and reused for every path.
#[derive(Debug, Clone)]
pub struct PathNormalizer {
    psi: Arc<NormalizingKernel>,
    /// Indices of base-grid nodes inside the kernel domain.
    targets: Vec<usize>,
    /// targets × base nodes.
    weights: Vec<Vec<f64>>,
    out_grid: Arc<GridSpec>,
}

impl PathNormalizer {
    pub fn new(base: &GridSpec, psi: Arc<NormalizingKernel>) -> Result<Self> {
        let step = match base {
            GridSpec::Tensor { axes, .. } if axes.len() == 1 && psi.dim() == 1 => base.spacing(0).unwrap_or(0.0),
            _ => return Err(FgfError::Precondition("pathwise normalization needs a 1-D tensor grid".into())),
        };
        let nodes: Vec<f64> = base.points().into_iter().map(|p| p[0]).collect();
        let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
        let targets: Vec<usize> = (0..nodes.len()).filter(|&i| psi.domain().contains(&[nodes[i]])).collect();
        if targets.is_empty() {
            return Err(FgfError::BadDomain("no grid node lies in the kernel domain".into()));
        }
        let weights = targets
            .iter()
            .map(|&t| {
                let x = [nodes[t]];
                let (a, b) = match psi.support(&x) {
                    Support::Box { lo, hi } => (lo[0], hi[0]),
                    _ => return Err(FgfError::BadDomain("ψ(·, x) has unbounded support".into())),
                };
                let slack = step * (1.0 + 1e-9);
                if a < first - slack || b > last + slack {
                    return Err(FgfError::BadDomain(format!(
                        "support [{a}, {b}] of ψ(·, {}) is not covered by the grid [{first}, {last}]",
                        x[0]
                    )));
                }
                let mut w: Vec<f64> = (0..nodes.len())
                    .map(|j| {
                        let lo = if j == 0 { a.min(first) } else { nodes[j] - step / 2.0 };
                        let hi = if j + 1 == nodes.len() { b.max(last) } else { nodes[j] + step / 2.0 };
                        cell_mass(&psi, lo.max(a), hi.min(b), &x)
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= total);
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        let out_grid = Arc::new(GridSpec::scattered(
            targets.iter().map(|&t| vec![nodes[t]]).collect(),
            base.cell_volume(),
        )?);
        Ok(Self {
            psi,
            targets,
            weights,
            out_grid,
        })
    }

    /// Base nodes inside the kernel domain, where the output is defined.
    pub fn output_grid(&self) -> &GridSpec {
        &self.out_grid
    }

    /// ∫B(u)ψ(u, x)du at each target node, for field row k.
    pub fn integral_term(&self, b: &FieldSample, k: usize) -> Vec<f64> {
        let row = b.row(k);
        self.weights
            .iter()
            .map(|w| w.iter().zip(row).map(|(a, v)| a * v).sum())
            .collect()
    }

    pub fn apply(&self, b: &FieldSample) -> Result<FieldSample> {
        if b.kernel.is_some() {
            return Err(FgfError::Precondition("sample is already normalized".into()));
        }
        if b.npoints() != self.weights[0].len() {
            return Err(FgfError::Precondition("sample grid differs from the normalizer grid".into()));
        }
        let values = (0..b.hursts.len())
            .flat_map(|k| {
                let scale = gamma_pos(b.hursts[k].value()).sqrt();
                let row = b.row(k);
                self.integral_term(b, k)
                    .into_iter()
                    .zip(&self.targets)
                    .map(move |(int, &t)| scale * (row[t] - int))
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(FieldSample {
            grid: self.out_grid.clone(),
            hursts: b.hursts.clone(),
            values,
            seed: b.seed,
            replicate: b.replicate,
            model: b.model,
            kernel: Some(self.psi.clone()),
        })
    }
}

/// ∫_a^b ψ(u, x)du on a 1-D cell (0 when the cell is empty).
fn cell_mass(psi: &NormalizingKernel, a: f64, b: f64, x: &[f64]) -> f64 {
    if b <= a {
        return 0.0;
    }
    if psi.has_closed_forms() {
        // uniform on its support
        return match psi.support(x) {
            Support::Box { lo, hi } => (b - a) / (hi[0] - lo[0]),
            _ => 0.0,
        };
    }
    let (nodes, wts) = crate::quad::gauss_legendre(8);
    let (m, r) = ((a + b) / 2.0, (b - a) / 2.0);
    nodes.iter().zip(&wts).map(|(t, w)| w * r * psi.eval(&[m + r * t], x)).sum()
}

pub fn normalize_path(b: &FieldSample, psi: Arc<NormalizingKernel>) -> Result<FieldSample> {
    PathNormalizer::new(&b.grid, psi)?.apply(b)
}

/// Circulant embedding of fractional Gaussian noise: eigenvalues of the
/// 2M-periodic extension of its autocovariance, or None when one is
/// negative beyond round-off.
fn circulant_spectrum(hurst: f64, m: usize, step: f64) -> Option<Vec<f64>> {
    let two_h = 2.0 * hurst;
    let acv = |k: f64| 0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h)) * step.powf(two_h);
    let size = 2 * m;
    let mut c: Vec<Complex<f64>> = (0..size)
        .map(|j| {
            let k = if j <= m { j } else { size - j };
            Complex::new(acv(k as f64), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut c);
    let max = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if c.iter().any(|z| z.re < -1e-10 * max) {
        return None;
    }
    Some(c.iter().map(|z| z.re.max(0.0)).collect())
}

/// Fractional Brownian motion with Var B(t) = |t|^{2H} on a uniform 1-D node
/// grid with 0 ≤ min and min a multiple of the spacing, by FFT circulant
/// embedding of the increments. Falls back to the Cholesky path if the
/// embedding is not nonnegative definite.
pub fn sample_fbm_fast(grid: GridSpec, hurst: HurstParam, seed: u64, replicates: usize) -> Result<Vec<FieldSample>> {
    let (axis, step) = match &grid {
        GridSpec::Tensor {
            axes,
            placement: Placement::Nodes,
        } if axes.len() == 1 => (axes[0], grid.spacing(0).unwrap_or(0.0)),
        _ => return Err(FgfError::Precondition("the FFT sampler needs a uniform 1-D node grid".into())),
    };
    let offset = axis.min / step;
    if axis.min < 0.0 || (offset - offset.round()).abs() > 1e-9 {
        return Err(FgfError::Precondition(
            "the FFT sampler needs min ≥ 0 on the lattice of the spacing".into(),
        ));
    }
    let skip = offset.round() as usize;
    let m = skip + axis.count - 1;
    let model = CovarianceModel::mvn();
    let Some(lambda) = circulant_spectrum(hurst.value(), m.max(1), step) else {
        log::warn!("circulant embedding has negative eigenvalues; falling back to Cholesky");
        return sample_b(grid, vec![hurst], model, seed, replicates);
    };
    let size = lambda.len();
    let scale: Vec<f64> = lambda.iter().map(|l| (l / size as f64).sqrt()).collect();
    let fft = FftPlanner::new().plan_fft_forward(size);
    let grid = Arc::new(grid);
    let out = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut w: Vec<Complex<f64>> = scale
                .iter()
                .map(|s| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex::new(s * re, s * im)
                })
                .collect();
            fft.process(&mut w);
            let path: Vec<f64> = std::iter::once(0.0)
                .chain(w[..m].iter().scan(0.0, |acc, z| {
                    *acc += z.re;
                    Some(*acc)
                }))
                .collect();
            FieldSample {
                grid: grid.clone(),
                hursts: vec![hurst],
                values: path[skip..].to_vec(),
                seed,
                replicate: r,
                model,
                kernel: None,
            }
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{cov_x, g_hh};
    use crate::constants::c_hh;
    use crate::kernels::nr_kernel;
    use crate::stats::{ks_two_sample, MeanEstimate};
    use approx::assert_relative_eq;

    fn hp(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    #[test]
    fn grid_points_and_volumes() {
        let g = GridSpec::cells(0.0, 1.0, 4).unwrap();
        let xs: Vec<f64> = g.points().into_iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.cell_volume(), 0.25);
        let n = GridSpec::nodes(0.0, 1.0, 5).unwrap();
        assert_eq!(n.points().last().unwrap()[0], 1.0);
        let t = GridSpec::tensor(
            vec![Axis { min: 0.0, max: 1.0, count: 2 }, Axis { min: 0.0, max: 2.0, count: 3 }],
            Placement::Midpoints,
        )
        .unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.points()[1], vec![0.25, 1.0]);
        assert_relative_eq!(t.cell_volume(), 0.5 * 2.0 / 3.0);
        assert!(GridSpec::nodes(0.0, 1.0, 1).is_err());
        assert!(GridSpec::scattered(vec![vec![0.5], vec![0.5]], 0.1).is_err());
    }

    #[test]
    fn grid_round_trips_through_json() {
        let g = GridSpec::cells(0.2, 1.0, 8).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<GridSpec>(&s).unwrap(), g);
    }

    #[test]
    fn cholesky_reproduces_matrix() {
        let a = [4.0, 2.0, 0.4, 2.0, 2.0, 0.5, 0.4, 0.5, 3.0];
        let Factor::Ok(l) = cholesky_rows(&a, 3, 0.0) else { panic!() };
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert_relative_eq!(s, a[i * 3 + j], max_relative = 1e-14);
            }
        }
        assert!(matches!(cholesky_rows(&[1.0, 2.0, 2.0, 1.0], 2, 0.0), Factor::Failed { .. }));
        assert!(matches!(
            JointGaussian::new(&[1.0, 2.0, 2.0, 1.0], 2),
            Err(FgfError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn gram_cap_enforced() {
        let g = GridSpec::cells(0.0, 1.0, 2100).unwrap();
        let e = JointField::base(g, vec![hp(0.2), hp(0.3)], CovarianceModel::mvn()).unwrap_err();
        assert!(matches!(e, FgfError::GramTooLarge { dim: 4200, .. }));
    }

    #[test]
    fn same_seed_same_values() {
        let g = GridSpec::nodes(0.0, 1.0, 9).unwrap();
        let f = JointField::base(g, vec![hp(0.3)], CovarianceModel::mvn()).unwrap();
        let a = f.samples(7, 130);
        let b = f.samples(7, 130);
        let c = f.samples(8, 3);
        assert!(a.iter().zip(&b).all(|(x, y)| x.values == y.values));
        assert_ne!(a[0].values, c[0].values);
        // replicate 129 does not depend on how many replicates were asked for
        let one = f.gaussian().draw_batch(7, 129, 1);
        assert_eq!(one.column(0).iter().copied().collect::<Vec<_>>(), a[129].values);
    }

    #[test]
    fn b_is_pinned_and_has_unit_variance() {
        let g = GridSpec::nodes(0.0, 1.0, 5).unwrap();
        let s = sample_b(g, vec![hp(0.3)], CovarianceModel::mvn(), 11, 10_000).unwrap();
        assert!(s.iter().all(|x| x.values[0] == 0.0));
        let sq: Vec<f64> = s.iter().map(|x| x.values[4] * x.values[4]).collect();
        assert!(MeanEstimate::from_slice(&sq).within(1.0, 3.0));
    }

    #[test]
    fn cross_correlation_of_two_hursts() {
        let model = CovarianceModel::mvn();
        let g = GridSpec::scattered(vec![vec![1.0]], 1.0).unwrap();
        let s = sample_b(g, vec![hp(0.2), hp(0.4)], model, 5, 10_000).unwrap();
        let prod: Vec<f64> = s.iter().map(|x| x.values[0] * x.values[1]).collect();
        let want = cov_b(&[1.0], &[1.0], hp(0.2), hp(0.4), &model).unwrap();
        assert!(MeanEstimate::from_slice(&prod).within(want, 3.0));
    }

    #[test]
    fn duplicate_points_rejected() {
        assert!(matches!(
            GridSpec::scattered(vec![vec![0.3], vec![0.3]], 0.1),
            Err(FgfError::Precondition(_))
        ));
        let g = GridSpec::nodes(0.1, 1.0, 3).unwrap();
        assert!(JointField::base(g, vec![hp(0.2), hp(0.2)], CovarianceModel::mvn()).is_err());
    }

    #[test]
    fn x_variance_matches_diagonal_formula() {
        let psi = Arc::new(nr_kernel(1.0 / 64.0, 1.0).unwrap());
        let model = CovarianceModel::mvn();
        let h = hp(0.05);
        let g = GridSpec::scattered(vec![vec![0.5]], 1.0).unwrap();
        let s = sample_x_direct(g, vec![h], psi.clone(), model, 3, 10_000).unwrap();
        let sq: Vec<f64> = s.iter().map(|x| x.values[0] * x.values[0]).collect();
        let want = c_hh(h, h, &model).unwrap() * (1.0 / 0.1 + g_hh(&[0.5], &[0.5], h, h, &psi, &model).unwrap());
        assert_relative_eq!(want, cov_x(&[0.5], &[0.5], h, h, &psi, &model).unwrap(), max_relative = 1e-12);
        assert!(MeanEstimate::from_slice(&sq).within(want, 3.0));
    }

    #[test]
    fn x_outside_domain_rejected() {
        let psi = Arc::new(nr_kernel(0.25, 1.0).unwrap());
        let g = GridSpec::nodes(0.0, 1.0, 4).unwrap();
        assert!(JointField::normalized(g, vec![hp(0.1)], psi, CovarianceModel::mvn()).is_err());
    }

    #[test]
    fn zero_path_normalizes_to_zero() {
        let psi = Arc::new(nr_kernel(1.0 / 64.0, 1.0).unwrap());
        let g = Arc::new(GridSpec::nodes(1.0 / 512.0, 1.0, 512).unwrap());
        let b = FieldSample {
            grid: g.clone(),
            hursts: vec![hp(0.1)],
            values: vec![0.0; 512],
            seed: 0,
            replicate: 0,
            model: CovarianceModel::mvn(),
            kernel: None,
        };
        let x = normalize_path(&b, psi).unwrap();
        assert!(x.values.iter().all(|v| *v == 0.0));
        assert_eq!(x.npoints(), 505);
    }

    #[test]
    fn uncovered_support_rejected() {
        let psi = Arc::new(nr_kernel(1.0 / 64.0, 1.0).unwrap());
        let g = GridSpec::nodes(0.25, 1.0, 64).unwrap();
        assert!(PathNormalizer::new(&g, psi).is_err());
    }

    #[test]
    fn fft_increments_have_the_right_variance() {
        let g = GridSpec::nodes(0.0, 1.0, 65).unwrap();
        let s = sample_fbm_fast(g, hp(0.3), 1, 10_000).unwrap();
        let dt: f64 = 1.0 / 64.0;
        let inc: Vec<f64> = s.iter().map(|x| (x.values[33] - x.values[32]).powi(2)).collect();
        assert!(MeanEstimate::from_slice(&inc).within(dt.powf(0.6), 3.0));
        let end: Vec<f64> = s.iter().map(|x| x.values[64].powi(2)).collect();
        assert!(MeanEstimate::from_slice(&end).within(1.0, 3.0));
    }

    #[test]
    fn fft_brownian_increments_uncorrelated() {
        let g = GridSpec::nodes(0.0, 1.0, 33).unwrap();
        let s = sample_fbm_fast(g, hp(0.5), 2, 10_000).unwrap();
        let lag: Vec<f64> = s
            .iter()
            .map(|x| (x.values[11] - x.values[10]) * (x.values[12] - x.values[11]) * 32.0)
            .collect();
        assert!(MeanEstimate::from_slice(&lag).within(0.0, 3.0));
    }

    #[test]
    fn fft_offset_grid() {
        let g = GridSpec::nodes(0.5, 1.0, 9).unwrap();
        let s = sample_fbm_fast(g, hp(0.3), 4, 2).unwrap();
        assert_eq!(s[0].values.len(), 9);
        assert!(sample_fbm_fast(GridSpec::nodes(0.3, 1.0, 9).unwrap(), hp(0.3), 4, 2).is_err());
    }

    #[test]
    fn fft_matches_cholesky_in_law() {
        let g = GridSpec::nodes(0.0, 1.0, 33).unwrap();
        let fast = sample_fbm_fast(g.clone(), hp(0.3), 21, 10_000).unwrap();
        let slow = sample_b(g, vec![hp(0.3)], CovarianceModel::mvn(), 22, 10_000).unwrap();
        let a: Vec<f64> = fast.iter().map(|x| x.values[32]).collect();
        let b: Vec<f64> = slow.iter().map(|x| x.values[32]).collect();
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
    }
}
