use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drone_marl::config::{parse_seeds, RunConfig};
use drone_marl::experiment::{self, median_eval, parse_values, SeedRun, SweepAxis};
use drone_marl::Result;

#[derive(Debug, Parser)]
#[command(
    name = "drone-marl",
    version,
    about = "Multi-agent DQN training for energy-constrained drone fleets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every configured seed and write metrics, curves and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// A seed count N (seeds 0..N) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// One training run per value of a single parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// psi, f, density, grid or reward_mode
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long)]
        values: String,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train two configurations and tabulate their evaluations side by side.
    Compare {
        /// Exactly two config files.
        #[arg(long, num_args = 2, required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Evaluate saved checkpoints with frozen weights.
    Eval {
        /// Directory holding drone_<k>.ckpt files.
        #[arg(long)]
        checkpoints: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
    },
}

fn seeds_arg(arg: &Option<String>) -> Result<Option<Vec<u64>>> {
    arg.as_deref().map(parse_seeds).transpose()
}

fn print_runs(label: &str, runs: &[SeedRun]) {
    for run in runs {
        match run.eval {
            Some(m) => println!(
                "{label} seed {}: success {:.3} mean steps {:.1}",
                run.seed, m.success_rate, m.mean_steps
            ),
            None => println!(
                "{label} seed {}: {} episodes, no evaluation",
                run.seed,
                run.records.len()
            ),
        }
    }
    if let Some(m) = median_eval(runs) {
        println!(
            "{label} median: success {:.3} mean steps {:.1}",
            m.success_rate, m.mean_steps
        );
    }
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seeds,
            workers,
        } => {
            let cfg = load(&config)?;
            let seeds = seeds_arg(&seeds)?;
            let runs = experiment::cmd_train(&cfg, &out, seeds.as_deref(), workers)?;
            print_runs("train", &runs);
        }
        Command::Sweep {
            config,
            out,
            axis,
            values,
            seeds,
            workers,
        } => {
            let cfg = load(&config)?;
            let axis: SweepAxis = axis.parse()?;
            let values = parse_values(&values)?;
            let seeds = seeds_arg(&seeds)?;
            let groups =
                experiment::cmd_sweep(&cfg, axis, &values, &out, seeds.as_deref(), workers)?;
            for (value, runs) in &groups {
                print_runs(&format!("{}={value}", axis.name()), runs);
            }
        }
        Command::Compare {
            config,
            out,
            seeds,
            workers,
        } => {
            let a = load(&config[0])?;
            let b = load(&config[1])?;
            let seeds = seeds_arg(&seeds)?;
            let [ra, rb] = experiment::cmd_compare(&a, &b, &out, seeds.as_deref(), workers)?;
            print_runs("a", &ra);
            print_runs("b", &rb);
        }
        Command::Eval {
            checkpoints,
            config,
            out,
            episodes,
            epsilon,
        } => {
            let cfg = load(&config)?;
            match experiment::cmd_eval(&checkpoints, &cfg, episodes, epsilon, &out)? {
                Some(m) => println!(
                    "eval: {episodes} episodes at epsilon {epsilon}: success {:.3} mean steps {:.1}",
                    m.success_rate, m.mean_steps
                ),
                None => println!("eval: no episodes"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
