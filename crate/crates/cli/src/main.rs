//! `ckn`: sharp constants, verification suites, the volume-growth pipeline
//! and the radial minimizer from the command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or domain error,
//! 3 numerical non-convergence.

mod commands;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use ckn_core::CknError;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Parser)]
#[command(name = "ckn", version, about = "Sharp Caffarelli-Kohn-Nirenberg constants and verification suites")]
struct Cli {
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Directory receiving JSON, CSV and SVG artifacts.
    #[arg(long, global = true, env = "CKN_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print K_a, p, ap and ω_n.
    Constant(commands::ConstantArgs),
    /// Run one verification suite.
    Verify(commands::VerifyArgs),
    /// Audit a space against the volume-growth theorem.
    Theorem1(commands::Theorem1Args),
    /// Minimize the radial Rayleigh quotient.
    Minimize(commands::MinimizeArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CknError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(CknError::Convergence { .. } | CknError::Numeric { .. }) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Outcome of a command, rendered according to `--format`.
pub struct Report {
    pub command: &'static str,
    pub result: Value,
    pub table: String,
    pub csv: Option<String>,
    /// Extra artifacts (file name, contents) for the output directory.
    pub files: Vec<(String, String)>,
    pub passed: bool,
    pub converged: bool,
    pub failure: Option<String>,
}

impl Report {
    pub fn new(command: &'static str, result: Value, table: String) -> Self {
        Report { command, result, table, csv: None, files: Vec::new(), passed: true, converged: true, failure: None }
    }
}

fn metadata() -> Value {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({ "tool": "ckn", "version": env!("CARGO_PKG_VERSION"), "unix_time": secs })
}

fn write_artifacts(dir: &Path, report: &Report) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    let body = serde_json::to_string_pretty(&report.result).map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(dir.join(format!("{}.json", report.command)), body + "\n")?;
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&metadata()).unwrap() + "\n")?;
    for (name, contents) in &report.files {
        std::fs::write(dir.join(name), contents)?;
    }
    Ok(())
}

fn render(format: Format, report: &Report) -> String {
    match format {
        Format::Json => {
            let mut v = report.result.clone();
            if let Value::Object(map) = &mut v {
                map.insert("metadata".into(), metadata());
            }
            serde_json::to_string_pretty(&v).unwrap() + "\n"
        }
        Format::Csv => report.csv.clone().unwrap_or_else(|| report.table.clone()),
        Format::Table => report.table.clone(),
    }
}

fn run(cli: Cli) -> CliResult<Report> {
    match cli.command {
        Command::Constant(args) => commands::constant(&args),
        Command::Verify(args) => commands::verify(&args),
        Command::Theorem1(args) => commands::theorem1(&args),
        Command::Minimize(args) => commands::minimize(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    let dir = cli.output_dir.clone();
    match run(cli) {
        Ok(report) => {
            print!("{}", render(format, &report));
            if let Some(dir) = dir {
                if let Err(e) = write_artifacts(&dir, &report) {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code());
                }
            }
            if !report.passed {
                eprintln!("FAIL: {}", report.failure.as_deref().unwrap_or("verification failed"));
                ExitCode::from(1)
            } else if !report.converged {
                eprintln!("error: {}", report.failure.as_deref().unwrap_or("did not converge"));
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
