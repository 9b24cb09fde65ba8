//! Run a scenario file end to end and write its output directory.
//!
//! `cargo run --example run_config -- configs/heat.toml out/heat`

use std::path::PathBuf;

use spdeflow::run::{run_scenario, write_outputs, RunOptions};
use spdeflow::scenario::{parse_config, Scenario};

fn main() -> spdeflow::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(args.next().unwrap_or_else(|| "configs/heat.toml".into()));
    let text = std::fs::read_to_string(&config).map_err(|e| spdeflow::Error::Io { path: config.clone(), source: e })?;
    let cfg = parse_config(&text)?;
    let out = args.next().map_or_else(|| PathBuf::from(&cfg.output), PathBuf::from);
    let scenario = Scenario::build(cfg)?;
    let summary = run_scenario(&scenario, RunOptions::default())?;
    write_outputs(&summary, &out)?;
    println!("{}", serde_json::to_string_pretty(&summary.aggregates).expect("aggregates serialize"));
    println!("wrote {}", out.display());
    Ok(())
}
