//! Command-line experiment runner.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uavsec_core::eval::{self, RandomPolicy};
use uavsec_core::metrics;
use uavsec_core::run::{self, Mode};
use uavsec_core::tabular::{QTable, TablePolicy};
use uavsec_core::{load_config, Error, ExperimentConfig, Mlp};

#[derive(Parser)]
#[command(name = "uavsec", version, about = "UAV placement and UE power control for secrecy capacity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Dqn)]
    mode: Mode,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write manifest, metrics and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Greedy rollouts of a trained agent (or a baseline) into eval.csv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint to evaluate: dqn.weights for --mode dqn, qtable.csv for --mode tabular.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides eval.episodes from the config.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// One run per seed, in parallel, under <out-dir>/seed-<n>.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Print the fully resolved configuration.
    ShowConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn config_from(path: Option<&Path>) -> uavsec_core::Result<ExperimentConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn evaluate(
    common: &Common,
    seed: u64,
    checkpoint: Option<&Path>,
    episodes: Option<usize>,
) -> uavsec_core::Result<()> {
    let config = config_from(common.config.as_deref())?;
    let episodes = episodes.unwrap_or(config.eval.episodes);
    let world = &config.world;
    let need_checkpoint = || {
        checkpoint.ok_or_else(|| Error::Argument(format!("--checkpoint is required for --mode {}", common.mode)))
    };
    let rows = match common.mode {
        Mode::Dqn => {
            let net = Mlp::load(need_checkpoint()?, None)?;
            eval::evaluate_net(&net, world, episodes, seed)?.metrics()
        }
        Mode::Tabular => {
            let table = QTable::load(need_checkpoint()?, world)?;
            let mut policy = TablePolicy::new(&table, world);
            eval::evaluate_policy(&mut policy, world, episodes, seed)?.metrics()
        }
        Mode::Random => {
            let mut policy = RandomPolicy::new(seed);
            eval::evaluate_policy(&mut policy, world, episodes, seed)?.metrics()
        }
        Mode::StaticOptimal => vec![eval::static_optimal_metrics(world)?],
    };
    std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::Io {
        path: common.out_dir.clone(),
        source: e,
    })?;
    let path = common.out_dir.join("eval.csv");
    metrics::export_training_curve(&path, &rows)?;
    let n = rows.len() as f64;
    let secrecy = rows.iter().map(|r| r.secrecy_capacity).sum::<f64>() / n;
    let reward = rows.iter().map(|r| r.cumulative_reward).sum::<f64>() / n;
    println!(
        "{} episodes: mean cumulative reward {reward:.4}, mean secrecy capacity {secrecy:.6} bits/s/Hz -> {}",
        rows.len(),
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> uavsec_core::Result<()> {
    match cli.command {
        Command::Train { common, seed } => {
            let config = config_from(common.config.as_deref())?;
            let summary = run::run_experiment(common.mode, &config, seed, &common.out_dir)?;
            let last = summary.metrics.last().expect("runs produce metrics");
            println!(
                "{} seed {seed}: {} episodes, final-100 mean secrecy {:.6}, last episode reward {:.4} -> {}",
                common.mode,
                summary.metrics.len(),
                summary.tail_secrecy(100),
                last.cumulative_reward,
                summary.out_dir.display()
            );
        }
        Command::Evaluate { common, seed, checkpoint, episodes } => {
            evaluate(&common, seed, checkpoint.as_deref(), episodes)?;
        }
        Command::Sweep { common, seeds } => {
            let config = config_from(common.config.as_deref())?;
            let results = run::sweep(common.mode, &config, &seeds, &common.out_dir);
            let mut first_err = None;
            for (seed, r) in seeds.iter().zip(results) {
                match r {
                    Ok(s) => println!("seed {seed}: final-100 mean secrecy {:.6}", s.tail_secrecy(100)),
                    Err(e) => {
                        eprintln!("seed {seed}: {e}");
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        Command::ShowConfig { config } => {
            print!("{}", config_from(config.as_deref())?.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
