use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tokenflow::harness::{
    emit_csv, reproduce, run, ExperimentConfig, GraphSpec, LoadSpec, ReproId, Steps,
};
use tokenflow::{augment, eigen_gap, transition_matrix, BalancerKind, Error, Result};

#[derive(Parser)]
#[command(
    name = "tokenflow",
    version,
    about = "Deterministic diffusion load balancing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    graph: Option<GraphSpec>,
    /// Self-loops per node (default: graph file value, else d).
    #[arg(long)]
    loops: Option<usize>,
    #[arg(long)]
    balancer: Option<BalancerKind>,
    #[arg(long)]
    load: Option<LoadSpec>,
    /// Step count, `auto` or `auto(T)`.
    #[arg(long, default_value = "auto")]
    steps: Steps,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Band width for the lower potential.
    #[arg(long)]
    s: Option<u64>,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let missing = |flag: &str| Error::Usage(format!("--{flag} is required"));
        let mut c = ExperimentConfig::new(
            self.graph.clone().ok_or_else(|| missing("graph"))?,
            self.loops,
            self.balancer.ok_or_else(|| missing("balancer"))?,
            self.load.clone().ok_or_else(|| missing("load"))?,
            self.steps,
        );
        c.seed = self.seed;
        c.s = self.s;
        c.record_every = self.record_every;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a graph in the adjacency text format.
    Generate {
        #[arg(long)]
        graph: GraphSpec,
        #[arg(long, default_value_t = 0)]
        loops: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print n,d,d_loops,lambda2,mu,t_mu,T_K for the balancing graph.
    Spectral {
        #[arg(long)]
        graph: GraphSpec,
        #[arg(long)]
        loops: Option<usize>,
        /// Initial discrepancy used for T(K).
        #[arg(long, default_value_t = 1)]
        k: u64,
    },
    /// Simulate and write the per-step metric CSV.
    Run {
        #[command(flatten)]
        args: RunArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Read the whole configuration from a JSON file instead.
        #[arg(long, conflicts_with_all = ["graph", "balancer", "load"])]
        config: Option<PathBuf>,
    },
    /// Simulate and print the fairness report.
    Audit {
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run a canned experiment battery and print its verdict CSV.
    Reproduce { id: String },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Usage(_) | Error::Config(_) | Error::Parse { .. } => 2,
                _ => 3,
            })
        }
    }
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate {
            graph,
            loops,
            output,
        } => {
            let (g, file_loops) = graph.build()?;
            std::fs::write(&output, g.to_text(file_loops.unwrap_or(loops)))
                .map_err(|e| Error::io(&output, e))?;
        }
        Command::Spectral { graph, loops, k } => {
            let (g, file_loops) = graph.build()?;
            let d_loops = loops.or(file_loops).unwrap_or(g.d());
            let s = eigen_gap(&transition_matrix(&augment(g, d_loops)))?;
            println!("n,d,d_loops,lambda2,mu,t_mu,T_K");
            println!(
                "{},{},{},{},{},{},{}",
                s.n,
                s.d,
                s.d_loops,
                s.lambda2,
                s.mu,
                s.t_mu,
                s.balancing_steps(k)?
            );
        }
        Command::Run {
            args,
            output,
            config,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    ExperimentConfig::from_json(&text)?
                }
                None => args.config()?,
            };
            if output.is_some() {
                cfg.output = output;
            }
            let result = run(&cfg)?;
            match &cfg.output {
                Some(path) => emit_csv(&result, path)?,
                None => result.series.write_csv(std::io::stdout().lock())?,
            }
        }
        Command::Audit { args } => {
            let result = run(&args.config()?)?;
            let report = result.fairness.ok_or_else(|| {
                Error::Config("the continuous balancer has no flow ledger".into())
            })?;
            println!("delta_observed,round_fair,max_s,violations");
            println!(
                "{},{},{},{}",
                report.delta_observed, report.round_fair, report.good_s, report.violation_count
            );
        }
        Command::Reproduce { id } => {
            let id: ReproId = id.parse()?;
            let verdict = reproduce(id)?;
            verdict.write_csv(std::io::stdout().lock())?;
            return Ok(verdict.passed());
        }
    }
    Ok(true)
}
