//! Rough log-normal volatility: cumulative chaos masses M^H_γ([δ, t]) under
//! the adapted kernel ψ(u, t) = t⁻¹1_{[0,t]}(u), and the multifractal random
//! walk Y_t = B_{M([δ,t])} driven by them.

use crate::chaos::{gamma_star, joint_hursts, simulate_totals, MeasureSpec};
use crate::constants::HurstParam;
use crate::covariance::CovarianceModel;
use crate::error::{FgfError, Result};
use crate::kernels::nr_kernel;
use crate::report::{DiagnosticReport, Entry};
use crate::sampler::{replicate_rng, GridSpec, JointField};
use crate::stats::{ks_two_sample, MeanEstimate};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolConfig {
    pub delta: f64,
    pub horizon: f64,
    pub cells: usize,
}

impl Default for VolConfig {
    fn default() -> Self {
        Self {
            delta: 1.0 / 64.0,
            horizon: 1.0,
            cells: 256,
        }
    }
}

impl VolConfig {
    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(FgfError::Domain {
                name: "delta",
                value: self.delta,
                range: "(0, horizon)",
            });
        }
        if !(self.horizon > self.delta) || self.cells < 2 {
            return Err(FgfError::Precondition("need δ < T and at least two time cells".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.validate()?;
        GridSpec::cells(self.delta, self.horizon, self.cells)
    }

    /// Time grid δ = t₀ < t₁ < … < t_K = T.
    pub fn times(&self) -> Vec<f64> {
        let step = (self.horizon - self.delta) / self.cells as f64;
        (0..=self.cells)
            .map(|k| if k == self.cells { self.horizon } else { self.delta + k as f64 * step })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolPath {
    pub times: Vec<f64>,
    /// M([δ, t_k]); starts at 0.
    pub cumulative: Vec<f64>,
    pub hurst: f64,
    pub gamma: f64,
    pub seed: u64,
    pub replicate: u64,
}

impl VolPath {
    pub fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrwPath {
    pub times: Vec<f64>,
    /// Y at each grid time; Y(δ) = 0.
    pub log_price: Vec<f64>,
    pub vol_seed: u64,
    pub price_seed: u64,
    pub replicate: u64,
}

fn check_gamma(gamma: f64) -> Result<()> {
    let g1 = gamma_star(1)?.gamma_star;
    if !(gamma >= 0.0 && gamma < g1) {
        return Err(FgfError::Domain {
            name: "gamma",
            value: gamma,
            range: "[0, γ*(1))",
        });
    }
    Ok(())
}

fn vol_field(cfg: &VolConfig, hursts: Vec<HurstParam>) -> Result<JointField> {
    let psi = Arc::new(nr_kernel(cfg.delta, cfg.horizon)?);
    JointField::normalized(cfg.grid()?, hursts, psi, CovarianceModel::mvn())
}

/// Cumulative chaos masses along the time grid, one path per replicate.
pub fn vol_path(hurst: HurstParam, gamma: f64, cfg: &VolConfig, seed: u64, replicates: usize) -> Result<Vec<VolPath>> {
    check_gamma(gamma)?;
    let field = vol_field(cfg, vec![hurst])?;
    let n = cfg.cells;
    let lv = field.grid().cell_volume().ln();
    let half_var: Vec<f64> = (0..n).map(|i| 0.5 * field.variance(0, i)).collect();
    let times = cfg.times();
    let paths = field.gaussian().map_batches(seed, replicates, |first, mat| {
        let data = mat.as_slice();
        (0..mat.ncols())
            .map(|c| {
                let x = &data[c * n..(c + 1) * n];
                let cumulative: Vec<f64> = std::iter::once(0.0)
                    .chain(x.iter().zip(&half_var).scan(0.0, |acc, (v, hv)| {
                        *acc += if gamma == 0.0 { lv.exp() } else { (lv + gamma * v - gamma * gamma * hv).exp() };
                        Some(*acc)
                    }))
                    .collect();
                VolPath {
                    times: times.clone(),
                    cumulative,
                    hurst: hurst.value(),
                    gamma,
                    seed,
                    replicate: first + c as u64,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(paths.into_iter().flatten().collect())
}

/// Brownian motion run on the clock t ↦ M([δ, t]): independent Gaussian
/// increments with variances M(t_{k+1}) − M(t_k).
pub fn mrw_price(vol: &VolPath, price_seed: u64) -> MrwPath {
    let mut rng = replicate_rng(price_seed, vol.replicate);
    let log_price = std::iter::once(0.0)
        .chain(vol.cumulative.windows(2).scan(0.0, |y, w| {
            let z: f64 = StandardNormal.sample(&mut rng);
            *y += (w[1] - w[0]).max(0.0).sqrt() * z;
            Some(*y)
        }))
        .collect();
    MrwPath {
        times: vol.times.clone(),
        log_price,
        vol_seed: vol.seed,
        price_seed,
        replicate: vol.replicate,
    }
}

/// Share of M([δ,T]) carried by good points, per H and per H̄, with SE.
/// (H, H̄) pairs with an empty S-grid are skipped, since their mask is vacuous.
#[allow(clippy::too_many_arguments)]
pub fn good_support_report(
    hursts: &[HurstParam],
    gamma: f64,
    alpha: f64,
    hbars: &[HurstParam],
    cfg: &VolConfig,
    replicates: usize,
    seed: u64,
    threshold: f64,
) -> Result<DiagnosticReport> {
    check_gamma(gamma)?;
    let mut rep = DiagnosticReport::new();
    for &h in hursts {
        let specs: Vec<MeasureSpec> = hbars
            .iter()
            .filter_map(|&hb| MeasureSpec::new(h, hb, gamma, alpha).ok())
            .filter(|s| !s.s_grid().is_empty())
            .collect();
        if specs.is_empty() {
            rep.warn(format!("no admissible H̄ for H = {h}"));
            continue;
        }
        let field = vol_field(cfg, joint_hursts(&specs))?;
        let t = simulate_totals(&field, &specs, seed, replicates)?;
        for (k, s) in specs.iter().enumerate() {
            let frac: Vec<f64> = t.iter().map(|r| if r[k].m > 0.0 { r[k].i / r[k].m } else { 1.0 }).collect();
            let f = MeanEstimate::from_slice(&frac);
            rep.push(
                Entry::info(format!("good-point mass fraction H={h} Hbar={} alpha={alpha}", s.hbar), f.mean)
                    .with_se(f.se)
                    .check(f.mean >= threshold),
            );
        }
    }
    Ok(rep)
}

/// Moments and tower-property checks of the volatility and log-price laws
/// along a Hurst ladder, plus KS distances between neighbouring laws of
/// M([δ,T]). Only distributional summaries: paths at different H are not
/// coupled.
pub fn roughvol_report(ladder: &[HurstParam], gamma: f64, cfg: &VolConfig, replicates: usize, seed: u64) -> Result<DiagnosticReport> {
    let mut rep = DiagnosticReport::new();
    let len = cfg.horizon - cfg.delta;
    rep.push(Entry::info("chaos gamma", gamma));
    rep.push(Entry::info("chaos gamma^2 (coefficient of log 1/|t-s| in the limit covariance)", gamma * gamma));
    let mut laws: Vec<(HurstParam, Vec<f64>)> = Vec::new();
    for (k, &h) in ladder.iter().enumerate() {
        let vs = vol_path(h, gamma, cfg, seed.wrapping_add(k as u64), replicates)?;
        let totals: Vec<f64> = vs.iter().map(VolPath::total).collect();
        let m = MeanEstimate::from_slice(&totals);
        rep.push(Entry::info(format!("H={h} E[M([delta,T])]"), m.mean).with_se(m.se).check(m.within(len, 3.0)));
        let m2 = MeanEstimate::from_slice(&totals.iter().map(|v| v * v).collect::<Vec<_>>());
        rep.push(Entry::info(format!("H={h} E[M([delta,T])^2]"), m2.mean).with_se(m2.se));
        let ys: Vec<MrwPath> = vs.iter().map(|v| mrw_price(v, seed.wrapping_add(1_000_003 + k as u64))).collect();
        let end: Vec<f64> = ys.iter().map(|y| y.log_price[y.log_price.len() - 1].powi(2)).collect();
        let var = MeanEstimate::from_slice(&end);
        rep.push(Entry::info(format!("H={h} Var(Y_T - Y_delta)"), var.mean).with_se(var.se).check(var.within(len, 3.0)));
        let worst_z = (1..ys[0].log_price.len())
            .map(|j| MeanEstimate::from_slice(&ys.iter().map(|y| y.log_price[j]).collect::<Vec<_>>()).z_score(0.0))
            .fold(0.0, f64::max);
        rep.push(Entry::info(format!("H={h} max_t |E[Y_t]|/SE"), worst_z));
        laws.push((h, totals));
    }
    for w in laws.windows(2) {
        let ks = ks_two_sample(&w[0].1, &w[1].1);
        rep.push(Entry::info(format!("KS M([delta,T]) H={} vs H={}", w[0].0, w[1].0), ks.statistic));
    }
    let m2: Vec<MeanEstimate> = laws
        .iter()
        .map(|(_, t)| MeanEstimate::from_slice(&t.iter().map(|v| v * v).collect::<Vec<_>>()))
        .collect();
    if let (Some(first), Some(last)) = (m2.first(), m2.last()) {
        let (d, se) = crate::stats::difference(last, first);
        rep.push(Entry::info("second-moment drift across ladder", d).with_se(se));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(v: f64) -> HurstParam {
        HurstParam::new(v).unwrap()
    }

    fn small() -> VolConfig {
        VolConfig {
            cells: 32,
            ..VolConfig::default()
        }
    }

    #[test]
    fn zero_delta_rejected() {
        let cfg = VolConfig { delta: 0.0, ..small() };
        assert!(vol_path(hp(0.1), 1.0, &cfg, 1, 2).is_err());
        assert!(vol_path(hp(0.1), 1.5, &small(), 1, 2).is_err());
    }

    #[test]
    fn gamma_zero_is_deterministic_clock() {
        let cfg = small();
        let v = vol_path(hp(0.1), 0.0, &cfg, 1, 3).unwrap();
        for p in &v {
            for (t, m) in p.times.iter().zip(&p.cumulative) {
                assert!((m - (t - cfg.delta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paths_monotone_and_unbiased() {
        let cfg = small();
        let v = vol_path(hp(0.1), 1.0, &cfg, 2, 10_000).unwrap();
        assert!(v.iter().all(|p| p.cumulative.windows(2).all(|w| w[1] >= w[0])));
        let m = MeanEstimate::from_slice(&v.iter().map(VolPath::total).collect::<Vec<_>>());
        assert!(m.within(cfg.horizon - cfg.delta, 3.0));
    }

    #[test]
    fn price_starts_at_zero_and_is_reproducible() {
        let v = vol_path(hp(0.2), 1.0, &small(), 3, 4).unwrap();
        let a = mrw_price(&v[2], 9);
        let b = mrw_price(&v[2], 9);
        assert_eq!(a.log_price[0], 0.0);
        assert_eq!(a, b);
        assert_ne!(mrw_price(&v[3], 9).log_price, a.log_price);
    }

    #[test]
    fn brownian_when_gamma_zero() {
        let cfg = small();
        let v = vol_path(hp(0.1), 0.0, &cfg, 4, 10_000).unwrap();
        let end: Vec<f64> = v.iter().map(|p| mrw_price(p, 5).log_price[cfg.cells].powi(2)).collect();
        assert!(MeanEstimate::from_slice(&end).within(cfg.horizon - cfg.delta, 3.0));
    }

    #[test]
    fn good_fraction_monotone_in_alpha() {
        let cfg = small();
        let fr = |a: f64| {
            let r = good_support_report(&[hp(0.05)], 1.0, a, &[hp(0.3)], &cfg, 400, 6, 0.0).unwrap();
            r.entries[0].value
        };
        let (f1, f2, f3) = (fr(0.5), fr(1.0), fr(1e6));
        assert!(f1 <= f2 && f2 <= f3);
        assert_eq!(f3, 1.0);
    }
}
