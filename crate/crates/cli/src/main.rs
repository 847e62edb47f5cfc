//! `tpshift` command-line front end.
//!
//! Every subcommand reads a JSON config (`--config`) and writes one report
//! (`--out`, default stdout) as JSON or CSV. Exit statuses: 0 success,
//! 2 invalid input, 3 numerical failure, 4 a checked relation failed,
//! 1 I/O failure while writing.

mod commands;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use tpshift::ErrorKind;

use crate::commands::Output;

#[derive(Parser)]
#[command(name = "tpshift", version, about = "Shift-invariant spaces of Gaussian type: densities, zero sets, sign retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed. Overrides the config seed where the command has one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// No summary on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
enum Command {
    /// Tabulate the generator g and its derivative.
    Gen,
    /// Evaluate f and f' at given points.
    Eval,
    /// Real zeros of f on an interval.
    Zeros,
    /// Density profiles of a point set.
    Density,
    /// Direct vs lattice circular density and Beurling domination.
    Lemma1,
    /// Zero counting and the Jensen chain in the Gaussian case.
    Jensen,
    /// Interlacing of zeros of f and of f + delta f'.
    Interlace,
    /// Recover f up to sign from magnitude samples.
    Retrieve,
    /// Success rate of sign retrieval against sampling density.
    Experiment,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Eval => "eval",
            Command::Zeros => "zeros",
            Command::Density => "density",
            Command::Lemma1 => "lemma1",
            Command::Jensen => "jensen",
            Command::Interlace => "interlace",
            Command::Retrieve => "retrieve",
            Command::Experiment => "experiment",
        }
    }
}

/// Failure carrying the exit status it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<tpshift::Error> for Failure {
    fn from(e: tpshift::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Violation => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    tpshift_version: &'a str,
    command: &'a str,
    config_hash: &'a str,
    seed: Option<u64>,
    report: &'a serde_json::Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// Hash of the canonical (key-sorted, compact) config plus the seed override.
fn config_hash(config: &serde_json::Value, seed: Option<u64>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("json value serializes"));
    if let Some(s) = seed {
        h.update(format!("\nseed={s}").as_bytes());
    }
    hex(&h.finalize())
}

fn read_config(path: Option<&Path>) -> Result<(String, serde_json::Value), Failure> {
    let path = path.ok_or_else(|| Failure::invalid("--config is required"))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    Ok((text, value))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("TPSHIFT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::invalid(format!("TPSHIFT_THREADS must be a non-negative integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Failure::invalid(format!("thread pool: {e}")))
}

fn render(cli: &Cli, hash: &str, seed: Option<u64>, out: &Output) -> String {
    match cli.format {
        Format::Json => {
            let env = Envelope {
                tpshift_version: tpshift::VERSION,
                command: cli.command.name(),
                config_hash: hash,
                seed,
                report: &out.json,
            };
            let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let seed = seed.map(|s| format!(" seed={s}")).unwrap_or_default();
            format!(
                "# tpshift {} command={} config_hash={hash}{seed}\n{}",
                tpshift::VERSION,
                cli.command.name(),
                out.csv
            )
        }
    }
}

fn write_report(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure {
        code: 1,
        message: format!("writing report: {e}"),
    };
    match path {
        Some(p) => fs::write(p, text).map_err(io),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(io),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_threads()?;
    let (text, value) = read_config(cli.config.as_deref())?;
    let out = commands::dispatch(cli.command, &text, cli.seed)?;
    let hash = config_hash(&value, cli.seed);
    write_report(cli.out.as_deref(), &render(cli, &hash, out.seed, &out))?;
    if !cli.quiet {
        eprintln!("{}", out.summary);
    }
    match out.violation {
        Some(message) => Err(Failure { code: 4, message }),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
