//! Command-line front end.
//!
//! [`dispatch`] parses an argument vector, merges an optional `--config`
//! file underneath the explicit flags, runs one subcommand and writes
//! `<subcommand>.csv` and `<subcommand>.json` into the output directory.
//!
//! Exit codes: 0 on success, 1 on a domain error (the error name is printed
//! on stderr), 2 on a usage error.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{CommandFactory, Parser};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

mod commands;
pub mod config;

pub use commands::Command;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_240_607;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "GXLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("UsageError: {0}")]
    Usage(String),
    #[error("FileNotFound: {0}")]
    FileNotFound(PathBuf),
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Domain(#[from] gxlab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn domain<E: Into<gxlab_core::Error>>(e: E) -> Self {
        Self::Domain(e.into())
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "gxlab", version, about = "Sublinear-expectation limit theorems, numerically")]
pub struct Cli {
    /// Flat `key = value` file; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "gxlab-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

/// Result of one subcommand.
pub struct Report {
    /// Human-readable lines for stdout.
    pub stdout: String,
    pub csv: String,
    pub results: serde_json::Value,
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::FileNotFound(path.to_path_buf()),
        _ => CliError::Io(e),
    })
}

/// Runs the command line and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    match run(argv.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(tok) = it.next() {
        if tok == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = tok.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts config-file pairs as flags right after the subcommand, skipping
/// any key already given on the command line.
fn merge_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let pairs = config::load(&path)?;
    let root = Cli::command();
    let Some((pos, sub)) = argv
        .iter()
        .enumerate()
        .skip(1)
        .find_map(|(i, tok)| root.find_subcommand(tok).map(|s| (i, s.clone())))
    else {
        return Ok(argv);
    };
    let mut injected = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            return Err(CliError::InvalidConfig("a config file cannot name another config file".into()));
        }
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::InvalidConfig(format!("unknown key `{key}` for `{}`", sub.get_name())))?;
        let flag = format!("--{key}");
        if argv.iter().any(|tok| *tok == flag || tok.starts_with(&format!("{flag}="))) {
            continue;
        }
        if matches!(arg.get_action(), clap::ArgAction::SetTrue) {
            match value.as_str() {
                "true" => injected.push(format!("--{key}")),
                "false" => {}
                _ => return Err(CliError::InvalidConfig(format!("`{key}` expects true or false, got `{value}`"))),
            }
        } else {
            injected.push(format!("--{key}={value}"));
        }
    }
    let mut merged = argv[..=pos].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&argv[pos + 1..]);
    Ok(merged)
}

fn worker_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Parses and runs; errors carry their exit code.
pub fn run(argv: Vec<String>) -> Result<(), CliError> {
    let argv = merge_config(argv)?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            return match e.kind() {
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand => {
                    emit(&e.to_string());
                    Ok(())
                }
                _ => {
                    let text = e.render().to_string();
                    let text = text.trim_end();
                    Err(CliError::Usage(text.strip_prefix("error: ").unwrap_or(text).to_string()))
                }
            };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::InvalidConfig(format!("cannot start worker pool: {e}")))?;

    let start = Instant::now();
    let report = pool.install(|| cli.command.execute(cli.seed))?;
    let elapsed = start.elapsed().as_secs_f64();

    emit(&report.stdout);
    let name = cli.command.name();
    std::fs::create_dir_all(&cli.out)?;
    std::fs::write(cli.out.join(format!("{name}.csv")), &report.csv)?;
    let summary = json!({
        "tool": "gxlab",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": name,
        "seed": cli.seed,
        "config": {
            "config_file": cli.config,
            "out": cli.out,
            "seed": cli.seed,
            "arguments": cli.command,
        },
        "results": report.results,
        "wall_clock_seconds": elapsed,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
    std::fs::write(cli.out.join(format!("{name}.json")), text + "\n")?;
    Ok(())
}
