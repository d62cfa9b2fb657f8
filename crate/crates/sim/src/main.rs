//! `jcesd`: run simulations and sweeps, and validate the implementation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jcesd_sim::sweep::{parse_snr_range, sweep};
use jcesd_sim::validate::{run_suite, Suite};
use jcesd_sim::{Result, SimConfig};

#[derive(Parser)]
#[command(name = "jcesd", version, about = "Semi-blind channel estimation and detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the config's SNR and seed grid and write one CSV row per user.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run this seed only instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an SNR range over seeds 0..N, resuming from an existing output.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive grid in dB, as LO:HI:STEP.
        #[arg(long)]
        snr: String,
        #[arg(long)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the acceptance checks; exits nonzero if any fails.
    Validate {
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
}

fn load(path: &Path) -> Result<SimConfig> {
    let cfg = SimConfig::load(path)?;
    if cfg.is_slow() {
        eprintln!("warning: {} describes a large system; expect long runtimes", path.display());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let cfg = load(&config)?;
            let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
            let summary = sweep(&cfg, &cfg.snr_db, &seeds, &out)?;
            eprintln!("{} cells run, {} rows in {}", summary.computed_cells, summary.rows_written, out.display());
            Ok(true)
        }
        Command::Sweep { config, snr, seeds, out } => {
            let cfg = load(&config)?;
            let snrs = parse_snr_range(&snr)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let summary = sweep(&cfg, &snrs, &seeds, &out)?;
            eprintln!(
                "{} cells run, {} already complete, {} rows in {}",
                summary.computed_cells,
                summary.skipped_cells,
                summary.rows_written,
                out.display()
            );
            Ok(true)
        }
        Command::Validate { suite } => {
            let mut all = true;
            for check in run_suite(suite) {
                println!("{check}");
                all &= check.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
