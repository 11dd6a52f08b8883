use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use surgirl::checkpoint::{describe, read_raw, Checkpoint};
use surgirl::config::{GroupConfig, RunConfig, DEFAULT_OUT, OUT_ENV};
use surgirl::run::{eval_to_files, resume, run_group, train};
use surgirl::Result;
use surgirl_core::envs::TaskId;

#[derive(Debug, Parser)]
#[command(name = "surgirl", version, about = "Knowledge-grounded RL on kinematic surgical tasks")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, env = OUT_ENV, default_value = DEFAULT_OUT)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one task from a run config, or continue a saved run.
    Train {
        #[arg(required_unless_present = "resume")]
        config: Option<PathBuf>,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long, conflicts_with = "config")]
        resume: Option<PathBuf>,
        /// New step budget for a resumed run.
        #[arg(long, requires = "resume")]
        steps: Option<u64>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        checkpoint: PathBuf,
        task: String,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-episode CSV; defaults to `eval-<task>-s<seed>.csv` beside the checkpoint.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write every step of every episode here.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run an incremental group config.
    Transfer { group_config: PathBuf },
    /// Print a checkpoint's manifest and block hashes.
    Inspect { checkpoint: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            resume: from,
            steps,
        } => {
            let outcome = match (config, from) {
                (_, Some(ckpt)) => resume(&ckpt, &cli.out, steps)?,
                (Some(path), None) => train(&RunConfig::load(&path)?, &cli.out)?,
                (None, None) => unreachable!("clap requires a config or --resume"),
            };
            if let Some(last) = outcome.rows.last() {
                println!(
                    "step {} success_rate {} episode_return {}",
                    last.step, last.success_rate, last.episode_return
                );
            }
            println!("{} ({})", outcome.final_checkpoint.display(), outcome.hash);
        }
        Command::Eval {
            checkpoint,
            task,
            episodes,
            seed,
            csv,
            trajectory,
        } => {
            let task: TaskId = task.parse()?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let csv = csv.unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join(format!("eval-{task}-s{seed}.csv"))
            });
            let summary = eval_to_files(&ckpt, task, episodes, seed, &csv, trajectory.as_deref())?;
            println!(
                "success_rate {} mean_return {}",
                summary.success_rate, summary.mean_return
            );
        }
        Command::Transfer { group_config } => {
            let group = GroupConfig::load(&group_config)?;
            let outcome = run_group(&group, &cli.out)?;
            for (entry, run) in outcome.lineage.entries().iter().zip(&outcome.runs) {
                println!("{} {} {}", entry.task, run.final_checkpoint.display(), entry.checkpoint_hash);
            }
            println!("{}", outcome.lineage_path.display());
        }
        Command::Inspect { checkpoint } => {
            print!("{}", describe(&read_raw(&checkpoint)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // every variant's message already includes its cause
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
