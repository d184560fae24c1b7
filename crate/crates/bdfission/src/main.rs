use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bdfission::cli::{
    run_analyze, run_constants, run_master, run_simulate, run_verify, CliError, RunConfig,
    VerifyLevel,
};

#[derive(Parser)]
#[command(
    name = "bdfission",
    version,
    about = "Spatial birth-death-fission simulator and verification toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured ensemble and persist trajectories and summaries.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the master seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate correlation functions and moments from a persisted run.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        /// Run directory produced by `simulate`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the finite-system master equation.
    Master {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the constants bundle: certificate, time bounds, schedule, regime.
    Constants {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suites.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        level: Level,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, clap::ValueEnum)]
enum Level {
    Quick,
    Full,
}

fn default_out(kind: &str) -> PathBuf {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    PathBuf::from(format!("runs/{kind}-{stamp}"))
}

fn dispatch() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let (cfg, base) = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_out("simulate"));
            run_simulate(&cfg, &base, &out, seed)?;
            println!("run written to {}", out.display());
            Ok(())
        }
        Command::Analyze { config, run, out } => {
            let (cfg, base) = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_out("analyze"));
            run_analyze(&cfg, &base, &run, &out)?;
            println!("reports written to {}", out.display());
            Ok(())
        }
        Command::Master { config, out } => {
            let (cfg, _) = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_out("master"));
            run_master(&cfg, &out)?;
            println!("master-equation outputs written to {}", out.display());
            Ok(())
        }
        Command::Constants { config, out } => {
            let (cfg, base) = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| default_out("constants"));
            run_constants(&cfg, &base, &out)?;
            println!("constants bundle written to {}", out.display());
            Ok(())
        }
        Command::Verify { level, out } => {
            let level = match level {
                Level::Quick => VerifyLevel::Quick,
                Level::Full => VerifyLevel::Full,
            };
            run_verify(level, out.as_deref())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
