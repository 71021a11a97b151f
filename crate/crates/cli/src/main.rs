//! `snbranch`: runs one experiment pipeline from a config file or a built-in
//! preset and writes CSV/JSON artifacts plus a manifest.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical or I/O failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;
use sha2::{Digest, Sha256};

mod config;
mod pipelines;

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<snbranch_core::Error> for RunError {
    fn from(e: snbranch_core::Error) -> Self {
        use snbranch_core::Error::*;
        match e {
            InvalidModel(_) | InvalidOffspring(_) | InvalidParameter(_) => RunError::Validation(e.to_string()),
            _ => RunError::Numerical(e.to_string()),
        }
    }
}

impl RunError {
    fn code(&self) -> u8 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(version, about = "Survival of the overall maximum of spectrally negative branching Lévy processes")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment by name.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, RunError> {
    let text = match (&cli.config, &cli.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| RunError::Validation(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => config::preset(name)?.to_string(),
        (None, None) => return Err(RunError::Validation("need --config or --preset".into())),
    };
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn write(out: &Path, name: &str, bytes: &[u8]) -> Result<(), RunError> {
    std::fs::write(out.join(name), bytes).map_err(|e| RunError::Io(format!("{name}: {e}")))
}

fn execute(cli: &Cli) -> Result<String, RunError> {
    let start = Instant::now();
    let cfg = load(cli)?;
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Validation(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| pipelines::run(&cfg))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| RunError::Io(format!("{}: {e}", cli.out.display())))?;
    let mut files = Vec::new();
    for a in &outcome.artifacts {
        write(&cli.out, &a.name, &a.bytes)?;
        files.push(json!({ "file": a.name, "sha256": sha256_hex(&a.bytes) }));
    }
    let canonical = cfg.canonical();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": snbranch_core::VERSION,
        "pipeline": cfg.pipeline,
        "seed": cfg.seed,
        "config_sha256": sha256_hex(canonical.as_bytes()),
        "config": canonical,
        "outputs": files,
        "summary": outcome.summary,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    bytes.push(b'\n');
    write(&cli.out, "manifest.json", &bytes)?;
    Ok(outcome.summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
