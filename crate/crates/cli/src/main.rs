use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{FileConfig, FlagValues, RunConfig};

pub const VERSION: &str = env!("SPARSEBUMP_VERSION");

/// Sparse operators, bump constants and testing constants on finite dyadic models.
#[derive(Debug, Parser)]
#[command(name = "sparsebump", version = VERSION)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    depth: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// auto, eigen, ascent or brute.
    #[arg(long, global = true)]
    norm_method: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Weight law: lognormal[:scale], dyadic-doubling, spike[:k].
    #[arg(long, global = true)]
    law: Option<String>,
    /// Family profile: random, random:<select>:<descend>, cascade.
    #[arg(long, global = true)]
    profile: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// Model JSON (default: <out>/model.json).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Family JSON (default: <out>/family.json).
    #[arg(long)]
    pub family: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random model and sparse family.
    Gen,
    /// Bump, A_p and testing constants.
    Constants {
        #[command(flatten)]
        input: InputArgs,
        /// Also write per-cube tables as CSV.
        #[arg(long)]
        tables: bool,
    },
    /// Primal and dual operator norms.
    Norm {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Check inequalities and write reports.jsonl.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated inequalities (default: all).
        #[arg(long, value_delimiter = ',')]
        which: Vec<String>,
    },
    /// Annealing search for extremal ratios.
    Search {
        #[arg(long)]
        objective: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        proposal: Option<String>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        cooling: Option<f64>,
        #[arg(long)]
        mutation_rate: Option<f64>,
        #[arg(long)]
        log2_bound: Option<f64>,
        /// Independent annealing chains, run in parallel.
        #[arg(long)]
        chains: Option<usize>,
        /// Continue depth by depth up to this depth.
        #[arg(long)]
        ladder_to: Option<u32>,
    },
    /// Grid sweep over depth, p, delta and seeds.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        depths: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        ps: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<u64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Constants { .. } => "constants",
            Command::Norm { .. } => "norm",
            Command::Verify { .. } => "verify",
            Command::Search { .. } => "search",
            Command::Sweep { .. } => "sweep",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let g = cli.global;
    let mut file = match &g.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Search {
            objective,
            iterations,
            proposal,
            step,
            temperature,
            cooling,
            mutation_rate,
            log2_bound,
            chains,
            ladder_to,
        } => {
            let s = &mut file.search;
            s.objective = objective.clone().or(s.objective.take());
            s.iterations = iterations.or(s.iterations);
            s.proposal = proposal.clone().or(s.proposal.take());
            s.step = step.or(s.step);
            s.temperature = temperature.or(s.temperature);
            s.cooling = cooling.or(s.cooling);
            s.mutation_rate = mutation_rate.or(s.mutation_rate);
            s.log2_bound = log2_bound.or(s.log2_bound);
            s.chains = chains.or(s.chains);
            s.ladder_to = ladder_to.or(s.ladder_to);
        }
        Command::Sweep { depths, ps, deltas, seeds } => {
            let s = &mut file.sweep;
            s.depths = depths.clone().or(s.depths.take());
            s.ps = ps.clone().or(s.ps.take());
            s.deltas = deltas.clone().or(s.deltas.take());
            s.seeds = seeds.or(s.seeds);
        }
        _ => {}
    }
    let flags = FlagValues {
        depth: g.depth,
        seed: g.seed,
        p: g.p,
        delta: g.delta,
        norm_method: g.norm_method,
        out: g.out,
        law: g.law,
        profile: g.profile,
    };
    let cfg = RunConfig::resolve(cli.command.name(), file, flags, config::max_depth_from_env()?)?;
    match cli.command {
        Command::Gen => commands::gen(&cfg),
        Command::Constants { input, tables } => commands::constants(&cfg, &input, tables),
        Command::Norm { input } => commands::norm(&cfg, &input),
        Command::Verify { input, which } => commands::verify(&cfg, &input, &which),
        Command::Search { .. } => commands::search(&cfg),
        Command::Sweep { .. } => commands::sweep(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
