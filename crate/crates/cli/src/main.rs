use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dynfold::commands::{cmd_compare, cmd_demos, cmd_eval, cmd_identify, cmd_replay, cmd_train, EvalOptions, Mode};
use dynfold::config::RunConfig;
use dynfold::{CliError, Result};

#[derive(Parser)]
#[command(name = "dynfold", version, about = "Dynamic cloth folding: demonstrations, identification, training and evaluation")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted demonstrations on the configured fabric.
    Demos {
        #[arg(long)]
        out: PathBuf,
    },
    /// Score sampled fabrics against the demonstrations and write the pool file.
    Identify {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy; writes metrics.csv and checkpoint.bin into the output directory.
    Train {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory, if any.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint (or a stored action sequence) and write a JSON report.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        /// Run `--episodes` on every pool fabric.
        #[arg(long)]
        per_fabric: bool,
        /// Replay each policy trajectory from the training fabric open loop.
        #[arg(long)]
        fixed_trajectory: bool,
        /// Demonstration JSON whose actions are replayed instead of a policy.
        #[arg(long)]
        actions: Option<PathBuf>,
        /// Trajectory log (JSON lines) to write.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a trajectory log to PGM frames and print the d_sum trace.
    Replay {
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mann-Whitney U test on the d_sum of two evaluation reports.
    Compare { a: PathBuf, b: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Demos { out } => {
            let set = cmd_demos(&cfg, &out)?;
            println!("wrote {} demonstrations to {}", set.demos.len(), out.display());
        }
        Command::Identify { out } => {
            let out = out.or_else(|| cfg.paths.pool.clone()).ok_or_else(|| CliError::Usage("identify needs --out or paths.pool".into()))?;
            let pool = cmd_identify(&cfg, &out)?;
            println!("wrote {} fabrics to {}", pool.entries.len(), out.display());
        }
        Command::Train { mode, out, resume } => {
            let out = out.unwrap_or_else(|| cfg.out_dir());
            let rows = cmd_train(&cfg, mode, &out, resume)?;
            if let Some(last) = rows.last() {
                println!("epoch {} success {:.3} d_sum {:.4}", last.epoch, last.success_rate, last.mean_d_sum);
            }
        }
        Command::Eval { checkpoint, episodes, per_fabric, fixed_trajectory, actions, log, out } => {
            let opts = EvalOptions { episodes, per_fabric, fixed_trajectory, actions, log };
            let report = cmd_eval(&cfg, checkpoint.as_deref(), &opts)?;
            match out {
                Some(path) => report.save(path)?,
                None => println!("{}", serde_json::to_string_pretty(&report.aggregates)?),
            }
        }
        Command::Replay { log, out } => {
            let summary = cmd_replay(&log, &out)?;
            for (i, d) in summary.d_sum.iter().enumerate() {
                println!("{i} {d:.6}");
            }
            println!("frames {} logged final d_sum {:.6}", summary.frames, summary.logged_final_d_sum);
        }
        Command::Compare { a, b } => {
            println!("{}", serde_json::to_string_pretty(&cmd_compare(&a, &b)?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
