use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spdeflow::run::{report, run_scenario, write_outputs, RunOptions};
use spdeflow::scenario::{parse_config, Scenario, ScenarioConfig};

/// Parabolic SPDEs with transport noise, solved along stochastic flows.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its output directory.
    Run {
        config: PathBuf,
        /// Override the number of Monte Carlo paths.
        #[arg(long)]
        paths: Option<u64>,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; falls back to the config hint, then to all cores.
        #[arg(long, env = "SPDEFLOW_WORKERS")]
        workers: Option<usize>,
        /// Abort on the first failing path.
        #[arg(long)]
        fail_fast: bool,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a scenario and check the declared parabolicity.
    Validate { config: PathBuf },
    /// Re-aggregate an existing output directory.
    Report { dir: PathBuf },
}

fn load(path: &PathBuf) -> spdeflow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| spdeflow::Error::Io {
        path: path.clone(),
        source: e,
    })?;
    parse_config(&text)
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> spdeflow::Result<()> {
    match cli.command {
        Command::Run {
            config,
            paths,
            seed,
            workers,
            fail_fast,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(p) = paths {
                cfg.monte_carlo.paths = p;
            }
            if let Some(s) = seed {
                cfg.monte_carlo.seed = s;
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output));
            let workers = workers
                .or(cfg.monte_carlo.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let scenario = Scenario::build(cfg)?;
            let summary = run_scenario(&scenario, RunOptions { workers, fail_fast })?;
            write_outputs(&summary, &dir)?;
            let a = &summary.aggregates;
            println!(
                "{} paths ok, {} failed, {:.2} s on {} worker(s); output in {}",
                a.paths_ok,
                a.paths_failed,
                summary.timing.wall_seconds,
                summary.timing.workers,
                dir.display()
            );
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            let s = Scenario::build(cfg)?;
            let p = &s.parabolicity;
            println!(
                "ok: nu_hat = {} (declared {}), M_hat = {} (declared {}), {} steps, {} noise modes",
                p.nu_hat,
                p.nu,
                p.m_hat,
                p.m,
                s.steps,
                s.family.modes()
            );
            Ok(())
        }
        Command::Report { dir } => {
            let (_, agg) = report(&dir)?;
            println!("{}", serde_json::to_string_pretty(&agg).expect("aggregates serialize"));
            Ok(())
        }
    }
}
