//! Run configuration: command-line flags, an optional JSON file and
//! defaults, merged in that order of precedence and validated before any
//! work starts.

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgf_core::chaos::gamma_star;
use fgf_core::constants::HurstParam;
use fgf_core::covariance::{CovarianceModel, Domain};
use fgf_core::kernels::{self, NormalizingKernel, Theta};
use fgf_core::sampler::{Axis, GridSpec, Placement};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

/// A validation failure, located by the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

type Checked<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    ConstantsCheck,
    Covariance,
    ValidateKernel,
    Sample,
    Chaos,
    Bounds,
    Roughvol,
    GammaStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Mvn,
    WellBalanced,
    Fbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    B,
    X,
    FbmFast,
    NormalizedPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThetaSpec {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    UnitBall { dim: usize },
    Gaussian { dim: usize, sigma: f64 },
    PowerTail { p: f64 },
}

impl ThetaSpec {
    fn build(&self) -> fgf_core::Result<Theta> {
        match self {
            ThetaSpec::UniformBox { lo, hi } => Theta::uniform_box(lo.clone(), hi.clone()),
            ThetaSpec::UnitBall { dim } => Theta::unit_ball(*dim),
            ThetaSpec::Gaussian { dim, sigma } => Theta::gaussian(*dim, *sigma),
            ThetaSpec::PowerTail { p } => Theta::power_tail(*p),
        }
    }
}

/// A normalizing kernel by name and parameters. On the command line either
/// a bare name (`nr`) or the same JSON object as in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// ψ(u, t) = t⁻¹1_{[0,t]}(u) on [δ, T]; δ and T default to the run's.
    Nr {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<f64>,
    },
    MovingAverage { width: f64, lo: f64, hi: f64 },
    Convolution {
        theta: ThetaSpec,
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default)]
        exclude: f64,
    },
    SelfSimilar {
        theta: ThetaSpec,
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default)]
        exclude: f64,
    },
}

impl FromStr for KernelSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.starts_with('{') {
            return serde_json::from_str(s).map_err(|e| e.to_string());
        }
        match s {
            "nr" => Ok(KernelSpec::Nr {
                delta: None,
                horizon: None,
            }),
            _ => Err(format!("unknown kernel '{s}' (use 'nr' or a JSON kernel object)")),
        }
    }
}

impl KernelSpec {
    fn build(&self, delta: f64, horizon: f64) -> fgf_core::Result<NormalizingKernel> {
        match self {
            KernelSpec::Nr { delta: d, horizon: h } => kernels::nr_kernel(d.unwrap_or(delta), h.unwrap_or(horizon)),
            KernelSpec::MovingAverage { width, lo, hi } => kernels::moving_average_kernel(*width, *lo, *hi),
            KernelSpec::Convolution { theta, lo, hi, exclude } => {
                kernels::make_convolution_kernel(theta.build()?, Domain::new(lo.clone(), hi.clone(), *exclude)?)
            }
            KernelSpec::SelfSimilar { theta, lo, hi, exclude } => {
                kernels::make_self_similar_kernel(theta.build()?, Domain::new(lo.clone(), hi.clone(), *exclude)?)
            }
        }
    }
}

/// Either the compact `min:max:count[@nodes|@cells]` form (axes separated
/// by `x`) or a full grid object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridArg {
    Text(String),
    Spec(GridSpec),
}

impl FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let g = GridArg::Text(s.to_string());
        g.build().map(|_| g).map_err(|e| e.message)
    }
}

impl GridArg {
    pub fn build(&self) -> Checked<GridSpec> {
        let text = match self {
            GridArg::Spec(g) => return Ok(g.clone()),
            GridArg::Text(t) => t,
        };
        let bad = |m: String| ConfigError::new("grid", m);
        let (axes, placement) = match text.split_once('@') {
            Some((a, "nodes")) => (a, Placement::Nodes),
            Some((a, "cells")) => (a, Placement::Midpoints),
            Some((_, p)) => return Err(bad(format!("unknown placement '{p}' (nodes or cells)"))),
            None => (text.as_str(), Placement::Midpoints),
        };
        let axes = axes
            .split('x')
            .map(|a| {
                let parts: Vec<&str> = a.split(':').collect();
                let [min, max, count] = parts[..] else {
                    return Err(bad(format!("axis '{a}' is not min:max:count")));
                };
                let num = |v: &str| v.trim().parse::<f64>().map_err(|e| bad(format!("'{v}': {e}")));
                Ok(Axis {
                    min: num(min)?,
                    max: num(max)?,
                    count: count.trim().parse().map_err(|e| bad(format!("'{count}': {e}")))?,
                })
            })
            .collect::<Checked<Vec<_>>>()?;
        GridSpec::tensor(axes, placement).map_err(|e| bad(e.to_string()))
    }
}

/// A point given as comma-separated coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointArg(pub Vec<f64>);

impl FromStr for PointArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(PointArg)
    }
}

/// Every setting, all optional. The same shape is read from the config file
/// and produced from the command line, so merging is field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub subcommand: Option<CommandName>,
    pub model: Option<ModelName>,
    pub dim: Option<usize>,
    pub kernel: Option<KernelSpec>,
    pub grid: Option<GridArg>,
    pub field: Option<FieldKind>,
    pub hursts: Option<Vec<f64>>,
    pub h_ladder: Option<Vec<f64>>,
    pub hbar: Option<f64>,
    pub hbars: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    pub alpha_mult: Option<f64>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub x: Option<Vec<PointArg>>,
    pub y: Option<Vec<PointArg>>,
    pub h0: Option<f64>,
    pub delta: Option<f64>,
    pub horizon: Option<f64>,
    pub cells: Option<usize>,
    pub support_cells: Option<usize>,
    pub support_replicates: Option<usize>,
    pub path_limit: Option<usize>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr; $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        merge_fields!(self, lower; subcommand, model, dim, kernel, grid, field, hursts, h_ladder, hbar, hbars,
            gamma, alpha_mult, replicates, seed, threads, x, y, h0, delta, horizon, cells, support_cells,
            support_replicates, path_limit, threshold, out, report)
    }

    pub fn from_file(path: &Path) -> Checked<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError::new("config", format!("{}: {e}", path.display())))
    }

    /// Built-in defaults, with FGF_SEED and FGF_THREADS taken from the
    /// environment when present.
    pub fn defaults() -> Checked<Settings> {
        let env = |name: &str| -> Checked<Option<u64>> {
            match std::env::var(name) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map(Some)
                    .map_err(|e| ConfigError::new(name.to_lowercase(), format!("{name}='{v}': {e}"))),
                Err(_) => Ok(None),
            }
        };
        Ok(Settings {
            model: Some(ModelName::Mvn),
            dim: Some(1),
            kernel: Some(KernelSpec::Nr {
                delta: None,
                horizon: None,
            }),
            hursts: Some(vec![0.1]),
            hbar: Some(0.45),
            hbars: Some(vec![0.3]),
            gamma: Some(1.0),
            alpha_mult: Some(2.0),
            replicates: Some(10_000),
            seed: Some(env("FGF_SEED")?.unwrap_or(1)),
            threads: env("FGF_THREADS")?.map(|t| t as usize),
            x: Some(vec![PointArg(vec![0.25])]),
            y: Some(vec![PointArg(vec![0.5])]),
            h0: Some(0.4),
            delta: Some(1.0 / 64.0),
            horizon: Some(1.0),
            cells: Some(256),
            support_cells: Some(128),
            support_replicates: Some(2000),
            path_limit: Some(16),
            threshold: Some(0.9),
            field: Some(FieldKind::X),
            ..Settings::default()
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "fgf-chaos", version, about = "Fractional Gaussian fields as H goes to zero: checks and simulations")]
pub struct Cli {
    /// JSON config file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to FGF_THREADS, then the number of CPUs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// CSV output path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON report path (stdout when absent).
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form constants: limits, symmetry and quadrature spot checks.
    ConstantsCheck(DimArgs),
    /// cov_B, cov_X and the limiting kernel at chosen point pairs.
    Covariance(CovarianceArgs),
    /// Sampled check of the normalizing-kernel conditions.
    ValidateKernel(ValidateArgs),
    /// Draw B, X or normalized paths on a grid.
    Sample(SampleArgs),
    /// Chaos masses along a Hurst ladder.
    Chaos(ChaosArgs),
    /// Inequality sweep: Savage bound, envelopes, Riesz identity.
    Bounds,
    /// Rough-volatility and multifractal random walk paths.
    Roughvol(RoughvolArgs),
    /// κ*, ξ̄ and γ*(d).
    GammaStar(DimArgs),
}

#[derive(Debug, Args)]
pub struct DimArgs {
    #[arg(long = "d")]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelName>,
    /// Dimension of the fbf model.
    #[arg(long = "d")]
    pub dim: Option<usize>,
    /// `nr` or a JSON kernel object.
    #[arg(long)]
    pub kernel: Option<KernelSpec>,
    /// Left end δ of the default NR kernel domain.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CovarianceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Repeatable; coordinates separated by commas.
    #[arg(long)]
    pub x: Vec<PointArg>,
    #[arg(long)]
    pub y: Vec<PointArg>,
    #[arg(long, value_delimiter = ',')]
    pub hursts: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub h0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub field: Option<FieldKind>,
    #[arg(long, value_delimiter = ',')]
    pub hursts: Vec<f64>,
    #[arg(long)]
    pub grid: Option<GridArg>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ChaosArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// α as a multiple of γ.
    #[arg(long)]
    pub alpha_mult: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub h_ladder: Vec<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub grid: Option<GridArg>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RoughvolArgs {
    #[arg(long, value_delimiter = ',')]
    pub hurst_ladder: Vec<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub alpha_mult: Option<f64>,
    /// H̄ values for the good-point support report.
    #[arg(long, value_delimiter = ',')]
    pub hbars: Option<Vec<f64>>,
    /// Skip the good-point support report.
    #[arg(long, conflicts_with = "hbars")]
    pub no_good_support: bool,
    /// Time cells of the good-point support grid.
    #[arg(long)]
    pub support_cells: Option<usize>,
    #[arg(long)]
    pub support_replicates: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Paths per Hurst value written to the CSV.
    #[arg(long)]
    pub path_limit: Option<usize>,
}

fn nonempty(v: Vec<f64>) -> Option<Vec<f64>> {
    (!v.is_empty()).then_some(v)
}

impl ModelArgs {
    fn settings(self) -> Settings {
        Settings {
            model: self.model,
            dim: self.dim,
            kernel: self.kernel,
            delta: self.delta,
            horizon: self.horizon,
            ..Settings::default()
        }
    }
}

impl Cli {
    pub fn command_name(&self) -> CommandName {
        match self.command {
            Command::ConstantsCheck(_) => CommandName::ConstantsCheck,
            Command::Covariance(_) => CommandName::Covariance,
            Command::ValidateKernel(_) => CommandName::ValidateKernel,
            Command::Sample(_) => CommandName::Sample,
            Command::Chaos(_) => CommandName::Chaos,
            Command::Bounds => CommandName::Bounds,
            Command::Roughvol(_) => CommandName::Roughvol,
            Command::GammaStar(_) => CommandName::GammaStar,
        }
    }

    /// The flags that were given, as settings.
    pub fn settings(self) -> Settings {
        let top = Settings {
            subcommand: Some(self.command_name()),
            seed: self.seed,
            threads: self.threads,
            out: self.out,
            report: self.report,
            ..Settings::default()
        };
        let sub = match self.command {
            Command::ConstantsCheck(a) | Command::GammaStar(a) => Settings {
                dim: a.dim,
                ..Settings::default()
            },
            Command::Covariance(a) => Settings {
                x: (!a.x.is_empty()).then_some(a.x),
                y: (!a.y.is_empty()).then_some(a.y),
                hursts: nonempty(a.hursts),
                ..a.model.settings()
            },
            Command::ValidateKernel(a) => Settings {
                h0: a.h0,
                ..a.model.settings()
            },
            Command::Sample(a) => Settings {
                field: a.field,
                hursts: nonempty(a.hursts),
                grid: a.grid,
                replicates: a.replicates,
                ..a.model.settings()
            },
            Command::Chaos(a) => Settings {
                gamma: a.gamma,
                alpha_mult: a.alpha_mult,
                h_ladder: nonempty(a.h_ladder),
                hbar: a.hbar,
                grid: a.grid,
                replicates: a.replicates,
                ..a.model.settings()
            },
            Command::Bounds => Settings::default(),
            Command::Roughvol(a) => Settings {
                h_ladder: nonempty(a.hurst_ladder),
                gamma: a.gamma,
                delta: a.delta,
                horizon: a.horizon,
                cells: a.cells,
                replicates: a.replicates,
                alpha_mult: a.alpha_mult,
                hbars: if a.no_good_support { Some(Vec::new()) } else { a.hbars },
                support_cells: a.support_cells,
                support_replicates: a.support_replicates,
                threshold: a.threshold,
                path_limit: a.path_limit,
                ..Settings::default()
            },
        };
        top.over(sub)
    }
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: CommandName,
    pub model: ModelName,
    pub dim: usize,
    pub kernel: KernelSpec,
    /// Absent when the subcommand picks its own default grid.
    pub grid: Option<GridArg>,
    pub field: FieldKind,
    pub hursts: Vec<f64>,
    pub h_ladder: Vec<f64>,
    pub hbar: f64,
    pub hbars: Vec<f64>,
    pub gamma: f64,
    pub alpha_mult: f64,
    pub replicates: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub x: Vec<PointArg>,
    pub y: Vec<PointArg>,
    pub h0: f64,
    pub delta: f64,
    pub horizon: f64,
    pub cells: usize,
    pub support_cells: usize,
    pub support_replicates: usize,
    pub path_limit: usize,
    pub threshold: f64,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn need<T>(v: Option<T>, path: &str) -> Checked<T> {
    v.ok_or_else(|| ConfigError::new(path, "missing"))
}

fn check(ok: bool, path: impl Into<String>, message: impl FnOnce() -> String) -> Checked<()> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, message()))
    }
}

fn check_hursts(values: &[f64], path: &str, cap: f64) -> Checked<()> {
    check(!values.is_empty(), path, || "needs at least one value".into())?;
    for (i, &h) in values.iter().enumerate() {
        check(h > 0.0 && h < cap, format!("{path}[{i}]"), || format!("must lie in (0, {cap}), got {h}"))?;
    }
    Ok(())
}

impl RunConfig {
    /// Merges CLI > file > defaults and validates every field.
    pub fn resolve(cli: Settings, file: Option<Settings>) -> Checked<RunConfig> {
        if let (Some(f), Some(c)) = (file.as_ref().and_then(|f| f.subcommand), cli.subcommand) {
            check(f == c, "subcommand", || format!("config file is for {f:?}, command line asks for {c:?}"))?;
        }
        let s = cli.over(file.unwrap_or_default()).over(Settings::defaults()?);
        let cfg = RunConfig {
            subcommand: need(s.subcommand, "subcommand")?,
            model: need(s.model, "model")?,
            dim: need(s.dim, "dim")?,
            kernel: need(s.kernel, "kernel")?,
            grid: s.grid,
            field: need(s.field, "field")?,
            hursts: need(s.hursts, "hursts")?,
            h_ladder: s.h_ladder.unwrap_or_else(|| match s.subcommand {
                Some(CommandName::Roughvol) => vec![0.2, 0.1, 0.05],
                _ => vec![0.2, 0.1, 0.05, 0.025],
            }),
            hbar: need(s.hbar, "hbar")?,
            hbars: need(s.hbars, "hbars")?,
            gamma: need(s.gamma, "gamma")?,
            alpha_mult: need(s.alpha_mult, "alpha_mult")?,
            replicates: need(s.replicates, "replicates")?,
            seed: need(s.seed, "seed")?,
            threads: s.threads,
            x: need(s.x, "x")?,
            y: need(s.y, "y")?,
            h0: need(s.h0, "h0")?,
            delta: need(s.delta, "delta")?,
            horizon: need(s.horizon, "horizon")?,
            cells: need(s.cells, "cells")?,
            support_cells: need(s.support_cells, "support_cells")?,
            support_replicates: need(s.support_replicates, "support_replicates")?,
            path_limit: need(s.path_limit, "path_limit")?,
            threshold: need(s.threshold, "threshold")?,
            out: s.out,
            report: s.report,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Checked<()> {
        check(self.dim >= 1, "dim", || "must be at least 1".into())?;
        check(self.model == ModelName::Fbf || self.dim == 1 || self.uses_dim_only(), "model", || {
            format!("{:?} is one-dimensional but dim = {}", self.model, self.dim)
        })?;
        let cap = self.covariance_model()?.hurst_cap();
        check_hursts(&self.hursts, "hursts", cap)?;
        check_hursts(&self.h_ladder, "h_ladder", cap)?;
        for (i, w) in self.h_ladder.windows(2).enumerate() {
            check(w[1] < w[0], format!("h_ladder[{}]", i + 1), || "ladder must be strictly descending".into())?;
        }
        check(self.hbar > 0.0 && self.hbar < 0.5, "hbar", || format!("must lie in (0, 0.5), got {}", self.hbar))?;
        for (i, &hb) in self.hbars.iter().enumerate() {
            check(hb > 0.0 && hb < 0.5, format!("hbars[{i}]"), || format!("must lie in (0, 0.5), got {hb}"))?;
        }
        check(self.gamma.is_finite() && self.gamma >= 0.0, "gamma", || {
            format!("must be a finite number ≥ 0, got {}", self.gamma)
        })?;
        if matches!(self.subcommand, CommandName::Chaos | CommandName::Roughvol) {
            let d = if self.subcommand == CommandName::Roughvol { 1 } else { self.dim };
            let g = gamma_star(d).map_err(|e| ConfigError::new("gamma", e.to_string()))?.gamma_star;
            check(self.gamma < g, "gamma", || format!("must be below γ*({d}) = {g:.4}, got {}", self.gamma))?;
        }
        check(self.alpha_mult.is_finite() && self.alpha_mult > 0.0, "alpha_mult", || {
            format!("must be positive, got {}", self.alpha_mult)
        })?;
        check(self.replicates >= 1, "replicates", || "must be at least 1".into())?;
        check(self.support_replicates >= 1, "support_replicates", || "must be at least 1".into())?;
        check(self.threads.is_none_or(|t| t >= 1), "threads", || "must be at least 1".into())?;
        check(self.h0 > 0.0 && self.h0 < 0.5, "h0", || format!("must lie in (0, 0.5), got {}", self.h0))?;
        check(self.delta > 0.0, "delta", || format!("must be positive, got {}", self.delta))?;
        check(self.horizon > self.delta, "horizon", || format!("must exceed delta = {}, got {}", self.delta, self.horizon))?;
        check(self.cells >= 2, "cells", || "must be at least 2".into())?;
        check(self.support_cells >= 2, "support_cells", || "must be at least 2".into())?;
        check((0.0..=1.0).contains(&self.threshold), "threshold", || format!("must lie in [0, 1], got {}", self.threshold))?;
        let points: &[(&str, &Vec<PointArg>)] = match self.subcommand {
            CommandName::Covariance => &[("x", &self.x), ("y", &self.y)],
            _ => &[],
        };
        for &(name, pts) in points {
            for (i, p) in pts.iter().enumerate() {
                check(p.0.len() == self.dim && p.0.iter().all(|v| v.is_finite()), format!("{name}[{i}]"), || {
                    format!("needs {} finite coordinates", self.dim)
                })?;
            }
        }
        if let Some(g) = &self.grid {
            g.build()?;
        }
        if self.uses_kernel() {
            self.build_kernel()?;
        }
        Ok(())
    }

    fn uses_dim_only(&self) -> bool {
        matches!(self.subcommand, CommandName::ConstantsCheck | CommandName::GammaStar | CommandName::Bounds | CommandName::Roughvol)
    }

    fn uses_kernel(&self) -> bool {
        matches!(
            self.subcommand,
            CommandName::Covariance | CommandName::ValidateKernel | CommandName::Sample | CommandName::Chaos
        )
    }

    pub fn covariance_model(&self) -> Checked<CovarianceModel> {
        match self.model {
            ModelName::Mvn => Ok(CovarianceModel::mvn()),
            ModelName::WellBalanced => Ok(CovarianceModel::well_balanced()),
            ModelName::Fbf => CovarianceModel::fbf(self.dim).map_err(|e| ConfigError::new("dim", e.to_string())),
        }
    }

    pub fn build_kernel(&self) -> Checked<NormalizingKernel> {
        let k = self.kernel.build(self.delta, self.horizon).map_err(|e| ConfigError::new("kernel", e.to_string()))?;
        check(k.dim() == self.dim, "kernel", || format!("kernel dimension {} differs from dim = {}", k.dim(), self.dim))?;
        Ok(k)
    }

    /// Good-point threshold α = alpha_mult·γ. At γ = 0 the multiplier is
    /// used on its own so the split stays defined.
    pub fn alpha(&self) -> f64 {
        if self.gamma > 0.0 {
            self.alpha_mult * self.gamma
        } else {
            self.alpha_mult
        }
    }

    pub fn hurst_params(values: &[f64], path: &str) -> Checked<Vec<HurstParam>> {
        values
            .iter()
            .enumerate()
            .map(|(i, &h)| HurstParam::new(h).map_err(|e| ConfigError::new(format!("{path}[{i}]"), e.to_string())))
            .collect()
    }

    /// The configured grid, or `fallback` when none was given.
    pub fn grid_or(&self, fallback: &str) -> Checked<GridSpec> {
        match &self.grid {
            Some(g) => g.build(),
            None => GridArg::Text(fallback.to_string()).build(),
        }
    }
}
