//! Command-line front end: argument parsing, error reporting and exit codes.

pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use frontflow::config::load_config;
use frontflow::FlowError;
use serde_json::{json, Value};

use commands::{Context, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    Eikonal,
    Heat,
    Couple,
    Diagnose,
    Traject,
    Stability,
    Report,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Eikonal => "eikonal",
            Subcommand::Heat => "heat",
            Subcommand::Couple => "couple",
            Subcommand::Diagnose => "diagnose",
            Subcommand::Traject => "traject",
            Subcommand::Stability => "stability",
            Subcommand::Report => "report",
        }
    }
}

/// Moving fronts coupled to a heat equation with a surface source.
#[derive(Debug, Parser)]
#[command(name = "frontflow", version)]
pub struct Cli {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// Scenario configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 1 selects the sequential path. Defaults to the
    /// hardware count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write every Picard iterate under `<out>/iterates`.
    #[arg(long)]
    pub dump_iterates: bool,
    /// Stored arrival field (stem of `.json`/`.bin`) for `heat`.
    #[arg(long)]
    pub arrival: Option<PathBuf>,
}

/// Machine-readable error report.
pub fn error_json(kind: &str, message: &str, exit_code: i32, violations: Value) -> Value {
    json!({"error": {"kind": kind, "message": message, "exitCode": exit_code, "violations": violations}})
}

fn report_error(e: &FlowError) -> i32 {
    let code = if e.is_usage() { EXIT_USAGE } else { EXIT_NUMERICAL };
    let violations = match e {
        FlowError::Config(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        _ => json!([]),
    };
    eprintln!("{}", error_json(e.kind(), &e.to_string(), code, violations));
    code
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let msg = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_json("usage", msg, EXIT_USAGE, json!([])));
            return EXIT_USAGE;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("{}", error_json("usage", "--threads must be at least 1", EXIT_USAGE, json!([])));
            return EXIT_USAGE;
        }
        frontflow::par::configure_threads(n);
    }
    let cfg = match load_config(&cli.config) {
        Ok(c) => c,
        Err(FlowError::Io(e)) => {
            let msg = format!("cannot read config {}: {e}", cli.config.display());
            eprintln!("{}", error_json("config", &msg, EXIT_USAGE, json!([])));
            return EXIT_USAGE;
        }
        Err(e) => return report_error(&e),
    };
    let seed = match cfg.effective_seed() {
        Ok(s) => s,
        Err(e) => return report_error(&e),
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        return report_error(&FlowError::Io(e));
    }
    let ctx = Context {
        cfg,
        out: cli.out,
        seed,
        dump_iterates: cli.dump_iterates,
        arrival: cli.arrival,
    };
    match commands::dispatch(cli.subcommand.name(), &ctx) {
        Ok((_, Outcome::Done)) => EXIT_OK,
        Ok((_, Outcome::NotConverged(status))) => {
            let status = serde_json::to_value(status).unwrap_or(Value::Null);
            let msg = format!("coupled iteration stopped with status {}", status.as_str().unwrap_or("?"));
            eprintln!("{}", error_json("not_converged", &msg, EXIT_NUMERICAL, json!([])));
            EXIT_NUMERICAL
        }
        Err(e) => report_error(&e),
    }
}
