//! `glow` — experiment harness for the gossip-learning simulator.
//!
//! Three subcommands: `topo` generates topology files, `run` executes a
//! gossip/federated/centralized experiment from a config file, and `report`
//! folds finished run directories into one comparison table.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use glow_core::topology::{self, AgentId};
use runner::CliError;

#[derive(Parser)]
#[command(
    name = "glow",
    version,
    about = "Gossip-learning simulator with federated and centralized baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate topology files
    Topo(TopoArgs),
    /// Execute the run described by a config file
    Run(RunArgs),
    /// Summarize finished run directories as a comparison table
    Report(ReportArgs),
}

#[derive(Args)]
struct TopoArgs {
    /// ring_k, chain, ring, fully_connected, star_chain or ring_chain
    #[arg(long, default_value = "ring_k")]
    family: String,
    /// Number of agents in the core graph (disconnected extras not counted)
    #[arg(long)]
    agents: usize,
    /// Ring-lattice degree (ring_k only; even, or agents-1 for fully connected)
    #[arg(long)]
    degree: Option<usize>,
    /// Comma-separated ids of always-disconnected agents
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    disconnected: Vec<usize>,
    /// Comma-separated ids of agents with no local data
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    empty: Vec<usize>,
    /// Emit the whole ring_k family: degrees 0, 2, ... up to fully connected
    #[arg(long)]
    sweep: bool,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run config file
    #[arg(long)]
    config: PathBuf,
    /// Run once per epoch count, as sibling run directories (e.g. 2,4,8,16,32)
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    epochs_sweep: Vec<u32>,
}

#[derive(Args)]
struct ReportArgs {
    /// Finished run directories
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Also write the table to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_topo(args: &TopoArgs) -> Result<(), CliError> {
    let disconnected: Vec<AgentId> = args.disconnected.iter().copied().map(AgentId).collect();
    let empty: Vec<AgentId> = args.empty.iter().copied().map(AgentId).collect();
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;

    let mut topologies = Vec::new();
    if args.sweep {
        if args.family != "ring_k" {
            return Err(CliError::Config(
                "--sweep only applies to the ring_k family".into(),
            ));
        }
        topologies = topology::sweep(args.agents, &disconnected, &empty).map_err(config_err)?;
    } else {
        let degree = match (args.family.as_str(), args.degree) {
            ("ring_k", Some(d)) => d,
            ("ring_k", None) => {
                return Err(CliError::Config(
                    "--degree is required for ring_k without --sweep".into(),
                ))
            }
            (_, None) => 0,
            (family, Some(_)) => {
                return Err(CliError::Config(format!(
                    "--degree does not apply to the {family} family"
                )))
            }
        };
        let source = config::TopologySource::Generator {
            family: args.family.clone(),
            agents: args.agents,
            degree,
            disconnected,
            empty,
        };
        topologies.push(runner::build_topology(&source)?);
    }
    for topo in &topologies {
        let path = args.out.join(format!("{}.topo", topo.label));
        topo.save(&path).map_err(config_err)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::parse_file(&args.config).map_err(CliError::Config)?;
    if args.epochs_sweep.is_empty() {
        finish_run(&cfg)
    } else {
        let base_name = cfg.run_name.clone();
        for &epochs in &args.epochs_sweep {
            if epochs == 0 {
                return Err(CliError::Config(
                    "epoch sweep values must be positive".into(),
                ));
            }
            let mut variant = cfg.clone();
            variant.local_epochs = epochs;
            variant.run_name = format!("{base_name}_e{epochs}");
            finish_run(&variant)?;
        }
        Ok(())
    }
}

fn finish_run(cfg: &RunConfig) -> Result<(), CliError> {
    let dir = runner::execute(cfg)?;
    println!("{}", dir.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let table = runner::report(&args.dirs)?;
    print!("{table}");
    if let Some(out) = &args.out {
        std::fs::write(out, &table)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Topo(args) => cmd_topo(args),
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
