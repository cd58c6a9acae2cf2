use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iotalloc::baselines::StrategyId;
use iotalloc::harness::{emit_csv, realization_seed, run_campaign, run_sweep, RunConfig};
use iotalloc::topology::{generate_topology, NetworkConfig};

#[derive(Parser)]
#[command(name = "iotalloc", version, about = "Monte-Carlo campaigns for IoT power control and AP selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write raw.csv and aggregate.csv.
    Run(Common),
    /// Run every cell of the config's sweep grid.
    Sweep(Common),
    /// Dump one realization's AP and device positions.
    Topo(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategyId>>,
    #[arg(long)]
    realizations: Option<usize>,
}

impl Common {
    fn resolve(&self) -> iotalloc::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(s) = &self.strategies {
            cfg.strategies = s.clone();
        }
        if let Some(r) = self.realizations {
            cfg.realizations = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> iotalloc::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let result = run_campaign(&cfg)?;
            emit_csv(&result, &cfg.at_least, &cfg.output_dir)?;
            for a in &result.aggregates {
                println!(
                    "{:<15} satisfied {:6.3}  throughput {:7.3}  iterations {:5.2}  wall {:8.3} ms  failures {}",
                    a.strategy, a.mean_satisfied, a.mean_throughput, a.mean_iterations, a.mean_wall_ms, a.failures
                );
            }
        }
        Command::Sweep(args) => {
            let cfg = args.resolve()?;
            let result = run_sweep(&cfg)?;
            emit_csv(&result, &cfg.at_least, &cfg.output_dir)?;
            println!("{} cells written to {}", result.aggregates.len(), cfg.output_dir.display());
        }
        Command::Topo(args) => {
            let cfg = args.resolve()?;
            let network = NetworkConfig {
                rng_seed: realization_seed(cfg.master_seed, 0),
                ..cfg.network.clone()
            };
            let topo = generate_topology(&network)?;
            std::fs::create_dir_all(&cfg.output_dir).map_err(|source| iotalloc::Error::Io {
                path: cfg.output_dir.clone(),
                source,
            })?;
            let path = cfg.output_dir.join("topology.csv");
            topo.write_csv(&path)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
