//! Experiment driver for `fgf-core`: resolves a run configuration, runs one
//! subcommand on a sized worker pool and writes its CSV and JSON artifacts.

pub mod commands;
pub mod config;
pub mod output;

use clap::Parser;
use config::{Cli, CommandName, ConfigError, RunConfig, Settings};
use fgf_core::report::{DiagnosticReport, Verdict};
use std::process::ExitCode;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] fgf_core::FgfError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Exit status: 0 when every verdict is pass or info, 1 when one failed,
/// 2 on a configuration or runtime error.
pub fn exit_code(outcome: &Result<Verdict, CliError>) -> u8 {
    match outcome {
        Ok(Verdict::Fail) => 1,
        Ok(_) => 0,
        Err(_) => 2,
    }
}

/// Merges the configuration sources and validates the result.
pub fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let file = cli.config.as_deref().map(Settings::from_file).transpose()?;
    Ok(RunConfig::resolve(cli.settings(), file)?)
}

/// Runs a resolved configuration and writes its artifacts. Returns the
/// worst verdict of the report.
pub fn execute(cfg: &RunConfig) -> Result<Verdict, CliError> {
    let start = Instant::now();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let artifacts = pool.build()?.install(|| commands::dispatch(cfg))?;
    let csv_primary = matches!(cfg.subcommand, CommandName::Covariance | CommandName::Sample);

    let report = artifacts.report.map(|mut r| finish(&mut r, cfg, start).map(|_| r)).transpose()?;
    let verdict = report.as_ref().map_or(Verdict::Info, DiagnosticReport::worst);
    if let Some(csv) = &artifacts.csv {
        if csv_primary || cfg.out.is_some() {
            output::emit(cfg.out.as_deref(), csv)?;
        }
    }
    if let Some(r) = &report {
        if !csv_primary || cfg.report.is_some() {
            let mut json = serde_json::to_vec_pretty(r)?;
            json.push(b'\n');
            output::emit(cfg.report.as_deref(), &json)?;
        }
    }
    Ok(verdict)
}

fn finish(r: &mut DiagnosticReport, cfg: &RunConfig, start: Instant) -> Result<(), CliError> {
    r.config = serde_json::to_value(cfg)?;
    r.versions.insert("fgf-chaos".into(), env!("CARGO_PKG_VERSION").into());
    r.versions.insert("csv-schema".into(), output::SCHEMA_VERSION.to_string());
    r.wall_time_s = start.elapsed().as_secs_f64();
    Ok(())
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let outcome = resolve(Cli::parse()).and_then(|cfg| execute(&cfg));
    if let Err(e) = &outcome {
        eprintln!("fgf-chaos: {e}");
    }
    ExitCode::from(exit_code(&outcome))
}
