//! The three subcommands, minus argument parsing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use apg_core::trainer::{rate_diagnostic, RateDiagnostic};
use apg_core::verify::{self, Mutation, VerifyReport};
use chrono::{SecondsFormat, Utc};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::experiment::{self, RunOutput};
use crate::output::{self, RunManifest};
use crate::presets;

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// A config file path, or the name of a bundled preset.
pub fn resolve_config(arg: &str) -> Result<RunConfig, CliError> {
    let path = Path::new(arg);
    if path.exists() {
        return RunConfig::load(path);
    }
    match presets::get(arg) {
        Some(text) => RunConfig::from_json(text),
        None => Err(CliError::Config(format!(
            "{arg} is neither a file nor a preset ({})",
            presets::names().join(", ")
        ))),
    }
}

/// One seeded run writing every artifact into `dir`.
pub fn run_into(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunOutput, CliError> {
    let cfg = cfg.with_seed(seed);
    std::fs::create_dir_all(dir)?;
    let started_at = now();
    let ckpt_dir = cfg.output.checkpoints.then(|| dir.join("checkpoints"));
    let out = experiment::run(&cfg, ckpt_dir.as_deref())?;

    let mut outputs = BTreeMap::new();
    if let Some(pre) = &out.pretrain {
        std::fs::create_dir_all(dir.join("pretrain"))?;
        output::write_iterations(&dir.join("pretrain/iterations.csv"), &pre.iterations)?;
        output::write_episodes(&dir.join("pretrain/episodes.csv"), &pre.episodes)?;
        outputs.insert("pretrain_iterations".into(), "pretrain/iterations.csv".into());
        outputs.insert("pretrain_episodes".into(), "pretrain/episodes.csv".into());
    }
    output::write_iterations(&dir.join("iterations.csv"), &out.log.iterations)?;
    output::write_episodes(&dir.join("episodes.csv"), &out.log.episodes)?;
    outputs.insert("iterations".into(), "iterations.csv".into());
    outputs.insert("episodes".into(), "episodes.csv".into());
    if ckpt_dir.is_some() {
        outputs.insert("checkpoints".into(), "checkpoints".into());
    }
    RunManifest {
        artifact_version: output::artifact_version(),
        config_hash: cfg.hash(),
        seed,
        started_at,
        finished_at: now(),
        outputs,
        config: cfg.canonical_json(),
    }
    .write(&dir.join("manifest.json"))?;
    Ok(out)
}

/// Worker count for parallel seeds: `APG_THREADS` when set and positive.
pub fn thread_cap() -> Option<usize> {
    std::env::var("APG_THREADS").ok()?.trim().parse().ok().filter(|n: &usize| *n > 0)
}

/// Runs `seeds` in parallel, each in `out/seed-{s}`. Without seeds a single
/// run with the configured seed writes straight into `out`.
pub fn run_seeds(cfg: &RunConfig, out: &Path, seeds: Option<&[u64]>) -> Vec<(u64, PathBuf, Result<RunOutput, CliError>)> {
    let Some(seeds) = seeds else {
        let seed = cfg.trainer.seed;
        return vec![(seed, out.to_path_buf(), run_into(cfg, seed, out))];
    };
    let job = |s: &u64| {
        let dir = out.join(format!("seed-{s}"));
        let res = run_into(cfg, *s, &dir);
        (*s, dir, res)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| seeds.par_iter().map(job).collect()),
        Err(_) => seeds.iter().map(job).collect(),
    }
}

/// Runs every oracle suite and writes `verify.json` into `out`.
pub fn verify_into(out: &Path, mutation: Mutation) -> Result<VerifyReport, CliError> {
    std::fs::create_dir_all(out)?;
    let report = verify::run_all(mutation);
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    std::fs::write(out.join("verify.json"), text)?;
    Ok(report)
}

pub fn parse_grid(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Input(format!("grid entry `{t}` is not a positive integer")))
        })
        .collect()
}

/// Fits the rate diagnostic to the `grad_norm_sq` column of `log` and
/// writes `rate.json` into `out` (default: next to the log).
pub fn rate_into(log: &Path, grid: &[usize], out: Option<&Path>) -> Result<RateDiagnostic, CliError> {
    let grad_sq = output::read_column(log, "grad_norm_sq")?;
    let diag = rate_diagnostic(&grad_sq, grid).map_err(|e| CliError::Input(e.to_string()))?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => log.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir)?;
    }
    let mut text = serde_json::to_string_pretty(&diag)?;
    text.push('\n');
    std::fs::write(dir.join("rate.json"), text)?;
    Ok(diag)
}
