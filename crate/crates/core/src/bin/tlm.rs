use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tlm_core::cli::{dispatch, Command, ErrorRecord};
use tlm_core::{parse_config, TlmError};

#[derive(Debug, Parser)]
#[command(
    name = "tlm",
    version,
    about = "Transmission-line-matrix simulations from a JSON config"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (defaults to the config's `output.dir`, then `tlm-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-cell work.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Recorded in the summary; only randomized fixtures consume it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

fn run(args: &Args) -> Result<String, TlmError> {
    let path = args.config.as_ref().ok_or_else(|| {
        TlmError::Config(tlm_core::config::ConfigError::Syntax(
            "--config <path> is required".into(),
        ))
    })?;
    let text = std::fs::read_to_string(path)?;
    let config = parse_config(&text)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tlm-out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| TlmError::Io(std::io::Error::other(e.to_string())))?;
    let summary = pool.install(|| dispatch(&args.command, &config, &out, args.seed))?;
    Ok(serde_json::to_string_pretty(&summary).expect("summary serializes"))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(s) => {
            println!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let rec = ErrorRecord::from(&e);
            eprintln!(
                "{}",
                serde_json::to_string(&rec).expect("record serializes")
            );
            ExitCode::from(rec.exit_code as u8)
        }
    }
}
