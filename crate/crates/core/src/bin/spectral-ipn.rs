use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spectral_ipn::cli::{self, ExperimentConfig};
use spectral_ipn::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Limiting spectral distribution of information-plus-noise matrices"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for (m, g) at the given points and print CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Points as RE,IM separated by semicolons.
        #[arg(long, allow_hyphen_values = true)]
        z: String,
    },
    /// Write density.csv, atoms.csv and manifest.toml.
    Density {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the ensemble and write eigenvalues and a histogram.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Compare simulation against theory; exit 3 when the pooled KS is too large.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ks_threshold: f64,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<(), Error> {
    cli::init_thread_pool()?;
    match args.command {
        Command::Solve { common, z } => {
            let cfg = load(&common)?;
            let zs = cli::parse_z_list(&z)?;
            let pairs = cli::cmd_solve(&cfg, &zs)?;
            print!("{}", cli::solve_csv(&pairs));
        }
        Command::Density { common } => {
            let run = cli::cmd_density(&load(&common)?)?;
            eprintln!(
                "density: {} points, total mass {:.6}",
                run.curve.grid.len(),
                run.curve.total_mass()
            );
        }
        Command::Simulate { common } => {
            let run = cli::cmd_simulate(&load(&common)?)?;
            eprintln!("simulate: {} replicates", run.samples.len());
        }
        Command::Compare {
            common,
            ks_threshold,
        } => {
            let report = cli::cmd_compare(&load(&common)?, ks_threshold)?;
            print!("{}", report.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
