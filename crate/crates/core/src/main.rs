use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use poms::experiment::{self, CliError};
use poms::numkit::Alternative;

#[derive(Parser)]
#[command(name = "poms", version, about = "Quality-diversity policy search in a learned latent space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one variant over every configured seed.
    Run {
        config: PathBuf,
        /// Override the configured rollout thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run several variants on shared seeds and compare their final coverage.
    Compare {
        campaign: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rank test on final coverages stored in two CSV files.
    Stats {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value_t = AltArg::Greater)]
        alternative: AltArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AltArg {
    Greater,
    TwoSided,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, threads } => {
            let mut cfg = experiment::load_run_config(&config)?;
            if threads.is_some() {
                cfg.common.threads = threads;
            }
            let manifest = experiment::cmd_run(&cfg, true)?;
            println!("config {} -> {}", manifest.config_hash, cfg.common.output_dir().display());
        }
        Command::Compare { campaign, threads } => {
            let mut cfg = experiment::load_campaign_config(&campaign)?;
            if threads.is_some() {
                cfg.common.threads = threads;
            }
            let outcome = experiment::cmd_compare(&cfg, true)?;
            println!("variant_a,variant_b,u,p,method");
            for r in &outcome.stats {
                let u = r.u.map(|u| u.to_string()).unwrap_or_default();
                println!("{},{},{},{},{}", r.variant_a, r.variant_b, u, r.p, r.method);
            }
        }
        Command::Stats { a, b, alternative } => {
            let alt = match alternative {
                AltArg::Greater => Alternative::Greater,
                AltArg::TwoSided => Alternative::TwoSided,
            };
            let r = experiment::cmd_stats(&a, &b, alt)?;
            println!("u,p,method");
            println!("{},{},{}", r.u_statistic, r.p_value, r.method);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
