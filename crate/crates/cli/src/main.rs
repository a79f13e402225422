//! `vbm`: fixed points, certificates and variational principles in vector
//! B-metric spaces, driven by JSON problem files.

mod commands;
mod input;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NO_CONVERGENCE: u8 = 3;
pub const EXIT_HYPOTHESIS: u8 = 4;
pub const EXIT_EVP_HYPOTHESIS: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "vbm", version, about = "Fixed-point solvers and Ekeland-type principles in vector B-metric spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem file (JSON).
    #[arg(long, short, global = true)]
    pub input: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Seed for every sampled check.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance override: oracle tolerance for check-matrix and verify-metric,
    /// stopping tolerance for solve and stability.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Sample count for sampled checks.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Variant of the subcommand (solve: perov|graph|maia|avramescu,
    /// stability: rz|ostrowski, ekeland: weak|strong|caristi).
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Classify a matrix: spectral radius, convergence to zero, (inverse) positivity, splitting.
    CheckMatrix,
    /// Check the vector B-metric axioms on a point sample.
    VerifyMetric,
    /// Solve a fixed-point problem with an a-priori error certificate.
    Solve,
    /// Reich–Zaslavski or Ostrowski stability check.
    Stability,
    /// Ekeland variational principle or Caristi fixed point on a finite space.
    Ekeland,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckMatrix => "check-matrix",
            Command::VerifyMetric => "verify-metric",
            Command::Solve => "solve",
            Command::Stability => "stability",
            Command::Ekeland => "ekeland",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: String,
    pub message: String,
    pub detail: Option<Value>,
}

impl CliError {
    pub fn new(code: u8, kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError { code, kind: kind.into(), message: message.into(), detail: None }
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError::new(EXIT_INPUT, "input_error", message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// Successful command output. `code` may still be nonzero, e.g. when a
/// metric check found violations.
pub struct Outcome {
    pub mode: Option<String>,
    pub status: &'static str,
    pub code: u8,
    /// Tolerances actually used.
    pub tol: Value,
    pub result: Value,
    pub summary: Vec<String>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    detail: Option<&'a Value>,
}

#[derive(Serialize)]
struct Envelope<'a> {
    format_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'static str,
    mode: Option<&'a str>,
    seed: u64,
    tol: Value,
    samples: Option<usize>,
    status: &'a str,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorBody<'a>>,
}

fn render(cli: &Cli, outcome: &Result<Outcome, CliError>) -> String {
    let (mode, status, code, tol) = match outcome {
        Ok(o) => (o.mode.as_deref(), o.status, o.code, o.tol.clone()),
        Err(e) => (cli.mode.as_deref(), "error", e.code, cli.tol.map_or(Value::Null, Value::from)),
    };
    match cli.format {
        Format::Json => {
            let env = Envelope {
                format_version: input::FORMAT_VERSION,
                tool: env!("CARGO_PKG_NAME"),
                tool_version: env!("CARGO_PKG_VERSION"),
                command: cli.command.name(),
                mode,
                seed: cli.seed,
                tol,
                samples: cli.samples,
                status,
                exit_code: code,
                result: outcome.as_ref().ok().map(|o| &o.result),
                error: outcome.as_ref().err().map(|e| ErrorBody { kind: &e.kind, message: &e.message, detail: e.detail.as_ref() }),
            };
            let mut s = serde_json::to_string_pretty(&env).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => {
            let mut s = format!("vbm {} {}", env!("CARGO_PKG_VERSION"), cli.command.name());
            if let Some(m) = mode {
                s += &format!(" --mode {m}");
            }
            s += &format!(" (seed {})\nstatus: {status} (exit {code})\n", cli.seed);
            match outcome {
                Ok(o) => o.summary.iter().for_each(|line| {
                    s += line;
                    s.push('\n');
                }),
                Err(e) => s += &format!("error: {e}\n"),
            }
            s
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.input.as_ref().ok_or_else(|| CliError::input("--input is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::input(format!("--tol must be positive, got {t}")));
        }
    }
    match cli.command {
        Command::CheckMatrix => commands::check_matrix(cli, &text),
        Command::VerifyMetric => commands::verify_metric(cli, &text),
        Command::Solve => commands::solve(cli, &text),
        Command::Stability => commands::stability(cli, &text),
        Command::Ekeland => commands::ekeland(cli, &text),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = run(&cli);
    if let Err(e) = &outcome {
        eprintln!("vbm {}: {e}", cli.command.name());
    }
    let report = render(&cli, &outcome);
    let code = match &outcome {
        Ok(o) => o.code,
        Err(e) => e.code,
    };
    let written = match &cli.output {
        Some(path) => std::fs::write(path, report.as_bytes()).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => std::io::stdout().lock().write_all(report.as_bytes()).map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        eprintln!("vbm: {msg}");
        return ExitCode::from(EXIT_INPUT);
    }
    ExitCode::from(code)
}
