use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rd_optctl::cli::{self, Command, Overrides};

/// Optimal dosing schedules for the Fisher reaction-diffusion model.
///
/// Exit codes: 0 success, 2 config or input error, 3 solver divergence,
/// 4 optimizer did not converge, 5 optimized dose lost to the constant dose.
#[derive(Parser)]
#[command(name = "rd-optctl", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Forward solve under a fixed control.
    Simulate(Common),
    /// Optimize the dosing schedule.
    Optimize(Common),
    /// Optimize, then compare against the constant dose with the same mean.
    Compare(Common),
    /// Mesh an image and write the initial state.
    Ingest(Common),
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `export.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for reproducible scripting; every command is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for α sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RDOPTCTL_LOG", "error")).init();
    let args = Args::parse();
    let (command, common) = match args.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Optimize(c) => (Command::Optimize, c),
        Cmd::Compare(c) => (Command::Compare, c),
        Cmd::Ingest(c) => (Command::Ingest, c),
    };
    if let Some(seed) = common.seed {
        log::info!("seed {seed} (unused: runs are deterministic)");
    }
    let overrides = Overrides {
        out_dir: common.out,
        jobs: common.jobs,
    };
    let code = cli::run(command, &common.config, &overrides);
    ExitCode::from(code as u8)
}
