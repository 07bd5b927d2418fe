//! `mfsde`: batch experiments over the mean-field SDE toolkit.
//!
//! `mfsde [--workers N] [--check] <subcommand> <config.toml>` runs one pipeline
//! and writes `<output>/<subcommand>.csv`. See [`config`] for the file format.
//!
//! Exit status: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! failure, 4 oracle mismatch under `--check`. Failures print one line
//! `mfsde-error code=<n> kind=<kind> message="<text>"` to stderr.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use commands::{execute, Report, RunError, Subcommand};
pub use config::{ConfigError, ExperimentConfig};
pub use output::{Cell, Table};

pub const EXIT_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "mfsde", version, about = "Mean-field SDE experiment runner")]
pub struct Cli {
    /// Size of the worker pool. One worker makes CSV bodies byte-reproducible;
    /// any count gives the same values.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=1024))]
    pub workers: u16,

    /// Compare results against their oracle tolerances and exit 4 on a mismatch.
    #[arg(long)]
    pub check: bool,

    #[arg(value_enum)]
    pub subcommand: Subcommand,

    pub config: PathBuf,
}

/// Comment line written above every CSV header.
pub fn metadata_line(cmd: Subcommand, cfg: &ExperimentConfig) -> String {
    format!("mfsde {} digest={} seed={}", cmd.name(), cfg.digest(), cfg.seed)
}

fn error_line(code: i32, kind: &str, message: &str) -> String {
    format!("mfsde-error code={code} kind={kind} message={message:?}")
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", error_line(2, "usage", first.trim_start_matches("error: ")));
            eprint!("{text}");
            return 2;
        }
    };
    let cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{}", error_line(2, "config", &e.0));
            return 2;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers as usize)
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("{}", error_line(1, "io", &format!("cannot start worker pool: {e}")));
            return 1;
        }
    };
    let report = match pool.install(|| execute(cli.subcommand, &cfg, cli.check)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", error_line(e.exit_code(), e.kind(), e.message()));
            return e.exit_code();
        }
    };
    let path = output::output_dir(&cfg.output).join(format!("{}.csv", cli.subcommand.name()));
    if let Err(e) = report.table.write_file(&path, &metadata_line(cli.subcommand, &cfg)) {
        eprintln!(
            "{}",
            error_line(1, "io", &format!("cannot write {}: {e}", path.display()))
        );
        return 1;
    }
    println!("{}", path.display());
    match report.mismatch {
        Some(m) => {
            eprintln!("{}", error_line(EXIT_MISMATCH, "oracle_mismatch", &m));
            EXIT_MISMATCH
        }
        None => 0,
    }
}
