use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cal_core::cli::{self, AsoOptions};
use cal_core::Result;

#[derive(Parser)]
#[command(name = "cal", version, about = "Pool-based active learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable)
    #[arg(long = "set", value_name = "K=V")]
    overrides: Vec<String>,
    /// Comma-separated seeds, replacing the `seeds` key
    #[arg(long)]
    seed_list: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy over every seed
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Parallel (strategy, seed) runs
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train once and export the data map of the chosen split
    Datamap {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Pairwise ASO grid over history files
    Aso {
        #[arg(required = true)]
        histories: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        /// ordered | unordered | none
        #[arg(long, default_value = "ordered")]
        correction: String,
        /// pooled | final
        #[arg(long, default_value = "pooled")]
        scores: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pairwise overlap of acquired instances over selected-id files
    Overlap {
        #[arg(required = true)]
        selected: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Mean accuracy curves from history files
    Plot {
        #[arg(required = true)]
        histories: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a config (and its dataset) without running
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn load(args: &ConfigArgs) -> Result<cal_core::simulator::ExperimentConfig> {
    cli::load_config(args.config.as_deref(), &args.overrides, args.seed_list.as_deref())
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, jobs } => {
            let config = load(&config)?;
            report(&cli::cmd_run(&config, &out, jobs)?);
        }
        Command::Datamap { config, out } => {
            let config = load(&config)?;
            report(&cli::cmd_datamap(&config, &out)?);
        }
        Command::Aso { histories, out, alpha, bootstrap, correction, scores, seed } => {
            let opts = AsoOptions {
                alpha,
                bootstrap,
                correction: correction.parse()?,
                scores: scores.parse()?,
                seed,
            };
            report(&[cli::cmd_aso(&histories, &opts, &out)?]);
        }
        Command::Overlap { selected, out } => report(&[cli::cmd_overlap(&selected, &out)?]),
        Command::Plot { histories, out } => report(&[cli::cmd_plot(&histories, &out)?]),
        Command::ValidateConfig { config } => {
            let config = load(&config)?;
            let pool = cli::prepare(&config)?;
            println!(
                "ok: {} train / {} test instances, {} classes, config_hash={}",
                pool.train.len(),
                pool.test.len(),
                pool.classes(),
                config.hash()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    match dispatch(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
