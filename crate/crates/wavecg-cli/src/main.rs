//! `wavecg`: command-line driver.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a checked property
//! fails (artifacts are still written in that case).

// `!(x > y)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use commands::{CliError, Status};
use config::RunConfig;
use report::Output;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    KernelCheck,
    TransferScan,
    Spectrum,
    ResolventScan,
    LowerBound,
    Evolve,
    DecayReport,
}

#[derive(Parser, Debug)]
#[command(name = "wavecg", version, about = "Wave / Coleman-Gurtin coupling: symbols, spectrum, resolvent and decay")]
struct Cli {
    command: Command,
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV and JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "WAVECG_THREADS")]
    threads: Option<usize>,
    /// Seed for random data; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(CliError::Usage)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.threads {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut out = Output::new(&cli.out)?;
    let st = match cli.command {
        Command::KernelCheck => commands::kernel_check(&cfg, &mut out),
        Command::TransferScan => commands::transfer_scan(&cfg, &mut out),
        Command::Spectrum => commands::spectrum(&cfg, &mut out),
        Command::ResolventScan => commands::resolvent_scan(&cfg, &mut out),
        Command::LowerBound => commands::lower_bound(&cfg, &mut out),
        Command::Evolve => commands::evolve(&cfg, &mut out),
        Command::DecayReport => commands::decay_report(&cfg, &mut out),
    }?;
    for p in &out.written {
        log::info!("wrote {}", p.display());
    }
    Ok(st)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Violation(v)) => {
            for m in v.iter().take(20) {
                eprintln!("property violation: {m}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
