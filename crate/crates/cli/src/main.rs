//! `rowshard`: plan and simulate tiered sharding of embedding tables from a manifest.

mod commands;
mod manifest;
mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "rowshard", version, about = "Per-row tiered sharding planner for sequence embedding tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment manifest (TOML).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; overrides the manifest's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write Zipf histograms for every table with a `zipf` spec.
    Synth(Common),
    /// Build the frontier and the plan selected by the manifest goal.
    Plan(Common),
    /// Replay synthetic batches against a plan and the row-wise baseline.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Plan document written by `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Worker threads; results do not depend on this.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Tabulate predicted vs simulated metrics.
    Compare {
        #[arg(long)]
        plan: PathBuf,
        /// `sim_report.json` written by `simulate`.
        #[arg(long)]
        report: PathBuf,
        /// Relative error above which a metric is flagged.
        #[arg(long, default_value_t = rowshard_core::simulator::DEFAULT_COMPARE_TOLERANCE)]
        tolerance: f64,
        /// Also write `compare.csv` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the break-even row probabilities for the manifest's config and topology.
    Breakpoints {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(c) => commands::synth(&c),
        Command::Plan(c) => commands::plan(&c),
        Command::Simulate { common, plan, threads } => commands::simulate(&common, &plan, threads),
        Command::Compare { plan, report, tolerance, out } => {
            commands::compare(&plan, &report, tolerance, out.as_deref())
        }
        Command::Breakpoints { manifest } => commands::breakpoints(&manifest),
    }
}
