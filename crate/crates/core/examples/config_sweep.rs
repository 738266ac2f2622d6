//! Loads a JSON configuration and runs the same commands as the `tlm` binary.
//!
//! cargo run --example config_sweep -- [config.json] [out-dir]

use std::path::PathBuf;

use tlm_core::cli::{dispatch, stability_report, Command};
use tlm_core::parse_config;

fn main() -> tlm_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/chain_sweep.json")
    });
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tlm-config-sweep"));

    let config = parse_config(&std::fs::read_to_string(&path)?)?;
    for c in stability_report(&config)? {
        println!("{}", c.describe());
    }
    let summary = dispatch(&Command::Sweep, &config, &out, None)?;
    for m in &summary.messages {
        println!("{m}");
    }
    let rows = std::fs::read_to_string(out.join("sweep.csv"))?;
    print!("{rows}");
    Ok(())
}
