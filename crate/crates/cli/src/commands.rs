//! One function per subcommand. Each returns its artifacts in memory; the
//! caller decides where they go.

use crate::config::{CommandName, FieldKind, RunConfig};
use crate::output::{num, CsvTable};
use crate::CliError;
use fgf_core::bounds::bounds_sweep;
use fgf_core::chaos::{alpha_sweep, cauchy_run, f_kappa_unimodal, gamma_star, ChaosConfig};
use fgf_core::constants::{c_hh, cd_hh, mvn_constants, HurstParam};
use fgf_core::covariance::{cov_b, cov_x, limit_kernel, CovarianceModel};
use fgf_core::kernels::validate_kernel;
use fgf_core::oracle::{fbf_coefficient, mvn_inner_product, well_balanced_inner_product};
use fgf_core::quad::Tol;
use fgf_core::report::{DiagnosticReport, Entry};
use fgf_core::roughvol::{good_support_report, mrw_price, roughvol_report, vol_path, VolConfig};
use fgf_core::sampler::{sample_b, sample_fbm_fast, sample_x_direct, FieldSample, PathNormalizer};
use fgf_core::FgfError;
use rayon::prelude::*;
use std::sync::Arc;

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub report: Option<DiagnosticReport>,
    pub csv: Option<Vec<u8>>,
}

type Run = std::result::Result<Artifacts, CliError>;

const ORACLE_TOL: Tol = Tol::new(1e-12, 1e-10);

pub fn dispatch(cfg: &RunConfig) -> Run {
    match cfg.subcommand {
        CommandName::ConstantsCheck => constants_check(cfg),
        CommandName::Covariance => covariance(cfg),
        CommandName::ValidateKernel => validate(cfg),
        CommandName::Sample => sample(cfg),
        CommandName::Chaos => chaos(cfg),
        CommandName::Bounds => Ok(report_only(bounds_sweep(cfg.seed)?)),
        CommandName::Roughvol => roughvol(cfg),
        CommandName::GammaStar => gamma_star_report(cfg),
    }
}

fn report_only(r: DiagnosticReport) -> Artifacts {
    Artifacts {
        report: Some(r),
        csv: None,
    }
}

fn hp(v: f64) -> fgf_core::Result<HurstParam> {
    HurstParam::new(v)
}

fn rel_gap(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn constants_check(cfg: &RunConfig) -> Run {
    let d = cfg.dim;
    let mut rep = DiagnosticReport::new();
    let mut models = vec![("fbf", CovarianceModel::fbf(d)?)];
    if d == 1 {
        models.insert(0, ("mvn", CovarianceModel::mvn()));
        models.insert(1, ("well-balanced", CovarianceModel::well_balanced()));
    }
    let tiny = hp(1e-4)?;
    for (name, m) in &models {
        let c = c_hh(tiny, tiny, m)?;
        rep.push(Entry::info(format!("C_{{0,0}} limit: C(1e-4, 1e-4) [{name}]"), c).against(1.0, 0.01));
        let gaps = (3..=16)
            .map(|k| hp(0.5f64.powi(k)).and_then(|h| c_hh(h, h, m)).map(|c| (c - 1.0).abs()))
            .collect::<fgf_core::Result<Vec<_>>>()?;
        let shrinks = gaps.windows(2).all(|w| w[1] < w[0]);
        rep.push(Entry::info(format!("|C(H,H) - 1| at H = 2^-16 [{name}]"), gaps[gaps.len() - 1]).check(shrinks));
    }

    let grid = [0.02, 0.1, 0.2, 0.3, 0.4];
    let mut asym = 0.0f64;
    for &a in &grid {
        for &b in &grid {
            asym = asym.max((cd_hh(hp(a)?, hp(b)?, d)? - cd_hh(hp(b)?, hp(a)?, d)?).abs());
        }
    }
    rep.push(Entry::info(format!("max |cd(H,h) - cd(h,H)| (d={d})"), asym).against(0.0, 0.0));

    let pairs = [(0.1, 0.4), (0.25, 0.3), (0.02, 0.2)];
    let worst = pairs
        .iter()
        .map(|&(a, b)| Ok(rel_gap(cd_hh(hp(a)?, hp(b)?, d)?, fbf_coefficient(a, b, d, ORACLE_TOL)?)))
        .collect::<fgf_core::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    rep.push(Entry::info(format!("cd vs quadrature, max relative gap (d={d})"), worst).against(0.0, 1e-5));

    if d == 1 {
        let o = grid
            .iter()
            .map(|&h| hp(h).and_then(|h| mvn_constants(h, h)).map(|c| c.o.abs()))
            .collect::<fgf_core::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        rep.push(Entry::info("max |o(H,H)|", o).check(o < 1e-14));
        let points = [(0.4, 0.2, 1.0, 2.0), (0.05, 0.3, 0.5, 1.5), (0.1, 0.45, -1.0, 0.4)];
        for (name, m) in &models[..2] {
            let worst = points
                .iter()
                .map(|&(a, b, t, s)| {
                    let want = if *name == "mvn" {
                        mvn_inner_product(a, b, t, s, ORACLE_TOL)?
                    } else {
                        well_balanced_inner_product(a, b, t, s, ORACLE_TOL)?
                    };
                    Ok(rel_gap(cov_b(&[t], &[s], hp(a)?, hp(b)?, m)?, want))
                })
                .collect::<fgf_core::Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            rep.push(Entry::info(format!("cov_B vs quadrature, max relative gap [{name}]"), worst).against(0.0, 1e-5));
        }
    }
    Ok(report_only(rep))
}

fn coords(p: &[f64]) -> String {
    p.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

fn covariance(cfg: &RunConfig) -> Run {
    let model = cfg.covariance_model()?;
    let psi = cfg.build_kernel()?;
    let hursts = RunConfig::hurst_params(&cfg.hursts, "hursts")?;
    let hursts = hursts.as_slice();
    let jobs: Vec<(&[f64], &[f64], HurstParam, HurstParam)> = cfg
        .x
        .iter()
        .flat_map(|x| cfg.y.iter().map(move |y| (x.0.as_slice(), y.0.as_slice())))
        .flat_map(|(x, y)| hursts.iter().flat_map(move |&a| hursts.iter().map(move |&b| (x, y, a, b))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(x, y, a, b)| {
            let cb = cov_b(x, y, a, b, &model)?;
            let cx = cov_x(x, y, a, b, &psi, &model)?;
            let lim = if x == y { None } else { Some(limit_kernel(x, y, &psi)?) };
            Ok(vec![
                coords(x),
                coords(y),
                num(a.value()),
                num(b.value()),
                num(cb),
                num(cx),
                lim.map(num).unwrap_or_default(),
                lim.map(|l| num((cx - l).abs())).unwrap_or_default(),
            ])
        })
        .collect::<fgf_core::Result<Vec<_>>>()?;
    let mut t = CsvTable::new(["x", "y", "H", "h", "cov_B", "cov_X", "limit_kernel", "abs_gap"])?;
    for r in rows {
        t.row(r)?;
    }
    Ok(Artifacts {
        report: None,
        csv: Some(t.into_bytes()?),
    })
}

fn validate(cfg: &RunConfig) -> Run {
    let psi = cfg.build_kernel()?;
    let r = validate_kernel(&psi, cfg.h0)?;
    let mut rep = DiagnosticReport::new();
    rep.push(Entry::info("mass deviation", r.mass_deviation).against(0.0, r.mass_tolerance));
    for c in [&r.moment, &r.local_log, &r.pair_log] {
        rep.push(Entry::info(format!("{} supremum", c.condition), c.supremum).check(c.finite()));
        rep.push(Entry::info(format!("{} refinement delta", c.condition), c.refinement_delta));
    }
    rep.push(Entry::info("kernel passes", r.pass as u8 as f64).check(r.pass));
    rep.details = serde_json::to_value(&r)?;
    Ok(report_only(rep))
}

fn sample(cfg: &RunConfig) -> Run {
    let model = cfg.covariance_model()?;
    let hursts = RunConfig::hurst_params(&cfg.hursts, "hursts")?;
    let one_dim = || -> std::result::Result<(), CliError> {
        if cfg.dim != 1 {
            return Err(crate::config::ConfigError::new("field", "this field is only available for d = 1").into());
        }
        Ok(())
    };
    let draws: Vec<FieldSample> = match cfg.field {
        FieldKind::B => sample_b(cfg.grid_or("0.2:1:64")?, hursts, model, cfg.seed, cfg.replicates)?,
        FieldKind::X => {
            let psi = Arc::new(cfg.build_kernel()?);
            sample_x_direct(cfg.grid_or("0.2:1:64")?, hursts, psi, model, cfg.seed, cfg.replicates)?
        }
        FieldKind::FbmFast => {
            one_dim()?;
            let grid = cfg.grid_or("0:1:257@nodes")?;
            let per_h = hursts
                .iter()
                .enumerate()
                .map(|(k, &h)| sample_fbm_fast(grid.clone(), h, cfg.seed.wrapping_add(k as u64), cfg.replicates))
                .collect::<fgf_core::Result<Vec<_>>>()?;
            // interleave so rows are ordered by replicate, then Hurst index
            let per_h = per_h.as_slice();
            (0..cfg.replicates).flat_map(|r| per_h.iter().map(move |v| v[r].clone())).collect()
        }
        FieldKind::NormalizedPath => {
            one_dim()?;
            let psi = Arc::new(cfg.build_kernel()?);
            let base = cfg.grid_or(&format!("0:{}:513@nodes", cfg.horizon))?;
            let norm = PathNormalizer::new(&base, psi)?;
            let b = sample_b(base, hursts, model, cfg.seed, cfg.replicates)?;
            b.par_iter().map(|s| norm.apply(s)).collect::<fgf_core::Result<Vec<_>>>()?
        }
    };
    let dim = draws.first().map_or(1, |s| s.grid.dim());
    let header: Vec<String> = ["replicate".to_string(), "hurst".to_string()]
        .into_iter()
        .chain((0..dim).map(|k| if dim == 1 { "x".to_string() } else { format!("x{}", k + 1) }))
        .chain(std::iter::once("value".to_string()))
        .collect();
    let mut t = CsvTable::new(&header)?;
    let mut rows = 0usize;
    for s in &draws {
        let points = s.grid.points();
        for (k, h) in s.hursts.iter().enumerate() {
            for (p, v) in points.iter().zip(s.row(k)) {
                let mut r = vec![s.replicate.to_string(), num(h.value())];
                r.extend(p.iter().map(|c| num(*c)));
                r.push(num(*v));
                t.row(&r)?;
                rows += 1;
            }
        }
    }
    let mut rep = DiagnosticReport::new();
    rep.push(Entry::info("rows", rows as f64));
    rep.push(Entry::info("points per draw", draws.first().map_or(0, |s| s.npoints()) as f64));
    Ok(Artifacts {
        report: Some(rep),
        csv: Some(t.into_bytes()?),
    })
}

fn chaos(cfg: &RunConfig) -> Run {
    let ccfg = ChaosConfig {
        grid: cfg.grid_or("0.2:1:64")?,
        kernel: Arc::new(cfg.build_kernel()?),
        model: cfg.covariance_model()?,
        gamma: cfg.gamma,
        alpha: cfg.alpha(),
        hbar: hp(cfg.hbar)?,
        replicates: cfg.replicates,
        seed: cfg.seed,
    };
    let ladder = RunConfig::hurst_params(&cfg.h_ladder, "h_ladder")?;
    let (mut rep, pairs) = cauchy_run(&ccfg, &ladder)?;
    if cfg.gamma > 0.0 {
        rep.extend(alpha_sweep(&ccfg, ladder[0], &[1.1, 1.5, 2.0])?);
    }
    let mut t = CsvTable::new(["pair", "replicate", "hurst", "m", "i", "l", "i_coarse", "good_fraction", "saturated"])?;
    for (p, pair) in pairs.iter().enumerate() {
        let hs = [pair.hurst, pair.other];
        for (r, row) in pair.totals.iter().enumerate() {
            for (x, h) in row.iter().zip(hs) {
                t.row([
                    p.to_string(),
                    r.to_string(),
                    num(h.value()),
                    num(x.m),
                    num(x.i),
                    num(x.l),
                    num(x.i_coarse),
                    num(x.good_fraction),
                    x.saturated.to_string(),
                ])?;
            }
        }
    }
    Ok(Artifacts {
        report: Some(rep),
        csv: Some(t.into_bytes()?),
    })
}

fn roughvol(cfg: &RunConfig) -> Run {
    let vc = VolConfig {
        delta: cfg.delta,
        horizon: cfg.horizon,
        cells: cfg.cells,
    };
    let ladder = RunConfig::hurst_params(&cfg.h_ladder, "h_ladder")?;
    let mut rep = roughvol_report(&ladder, cfg.gamma, &vc, cfg.replicates, cfg.seed)?;
    if !cfg.hbars.is_empty() {
        let hbars = RunConfig::hurst_params(&cfg.hbars, "hbars")?;
        let sc = VolConfig {
            cells: cfg.support_cells,
            ..vc
        };
        for &h in &ladder {
            match good_support_report(&[h], cfg.gamma, cfg.alpha(), &hbars, &sc, cfg.support_replicates, cfg.seed, cfg.threshold) {
                Ok(r) => rep.extend(r),
                Err(e @ FgfError::GramTooLarge { .. }) => rep.warn(format!("good-point support skipped for H={h}: {e}")),
                Err(e) => return Err(e.into()),
            }
        }
    }
    let mut t = CsvTable::new(["hurst", "replicate", "t", "vol_cumulative", "log_price"])?;
    let keep = cfg.path_limit.min(cfg.replicates);
    for (k, &h) in ladder.iter().enumerate() {
        // the same streams the report used, so these are its first paths
        let seed = cfg.seed.wrapping_add(k as u64);
        for v in vol_path(h, cfg.gamma, &vc, seed, keep)? {
            let y = mrw_price(&v, cfg.seed.wrapping_add(1_000_003 + k as u64));
            for ((tt, m), lp) in v.times.iter().zip(&v.cumulative).zip(&y.log_price) {
                t.row([num(h.value()), v.replicate.to_string(), num(*tt), num(*m), num(*lp)])?;
            }
        }
    }
    Ok(Artifacts {
        report: Some(rep),
        csv: Some(t.into_bytes()?),
    })
}

fn gamma_star_report(cfg: &RunConfig) -> Run {
    let d = cfg.dim;
    let g = gamma_star(d)?;
    let mut rep = DiagnosticReport::new();
    rep.push(Entry::info("kappa*", g.kappa_star));
    rep.push(Entry::info("xi_bar", g.xi_bar));
    let floor = (1.75 * d as f64).sqrt();
    rep.push(Entry::info(format!("gamma*({d})"), g.gamma_star).check(g.gamma_star > floor));
    rep.push(Entry::info(format!("sqrt(1.75 d) (d={d})"), floor));
    rep.push(Entry::info(format!("sqrt(2 d) (d={d})"), (2.0 * d as f64).sqrt()));
    let uni = f_kappa_unimodal();
    rep.push(Entry::info("f unimodal on its domain", uni as u8 as f64).check(uni));
    rep.details = serde_json::to_value(g)?;
    Ok(report_only(rep))
}
