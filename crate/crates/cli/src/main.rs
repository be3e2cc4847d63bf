//! Command-line harness for the shape-filtering toolkit: fixture
//! generation, consistency checks, kernel-profile and condition-number
//! studies, filter timing benchmarks, and optimization runs.

mod commands;
mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "shapefilter",
    version,
    about = "Node-based shape filtering and shape optimization toolkit"
)]
pub struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for assembly and filter construction (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Seed for the randomized fixture generators.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// JSON config file (read by `optimize`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one of the built-in benchmark meshes.
    GenerateFixture(commands::generate::Args),
    /// Uniform-sensitivity consistency check of a filter.
    Consistency(commands::consistency::Args),
    /// Sample explicit kernel profiles against the numerical Helmholtz kernel.
    KernelProfile(commands::kernel_profile::Args),
    /// Dense condition numbers of the filter operators over p/a ratios.
    CondStudy(commands::cond_study::Args),
    /// Median per-application filter timings over p/a ratios.
    Bench(commands::bench::Args),
    /// Run a shape optimization from a JSON config.
    Optimize(commands::optimize::Args),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::GenerateFixture(args) => commands::generate::run(&cli, args),
        Command::Consistency(args) => commands::consistency::run(&cli, args),
        Command::KernelProfile(args) => commands::kernel_profile::run(&cli, args),
        Command::CondStudy(args) => commands::cond_study::run(&cli, args),
        Command::Bench(args) => commands::bench::run(&cli, args),
        Command::Optimize(args) => commands::optimize::run(&cli, args),
    }
}
