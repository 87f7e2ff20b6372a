use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saferace::harness::{
    ablate, evaluate, gen_world, load_agent, rollout, train_experiment, write_rollout, Ablation, ExperimentConfig,
};
use saferace::world::{ForestSpec, WorldSpec};
use saferace::{Error, QuadrotorParams, Result};

#[derive(Debug, Parser)]
#[command(name = "saferace", version, about = "Train and evaluate quadrotor racing policies in obstacle fields")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or output file for gen-world and rollout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a policy; writes checkpoint.bin, training_log.csv and config.toml.
    Train {
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint with the deterministic policy.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of trajectories; defaults to the config's eval_trajectories.
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Train and evaluate with and without one reward term.
    Ablate {
        /// no_safety_reward or no_terminal_time.
        #[arg(long)]
        ablation: String,
    },
    /// Generate a forest world file.
    GenWorld {
        #[arg(long)]
        level: u8,
    },
    /// Fly one deterministic episode and write the trajectory CSV.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        world: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config { key: "--config".into(), reason: "required by this command".into() })?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_path<'a>(cli: &'a Cli, default: &'a str) -> &'a Path {
    cli.out.as_deref().unwrap_or(Path::new(default))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { resume } => {
            let cfg = load_config(&cli)?;
            let out = out_path(&cli, "run");
            let trained = train_experiment(&cfg, out, *resume)?;
            if let Some(last) = trained.records.last() {
                println!(
                    "trained {} updates, {} env steps; last mean reward {:.2}",
                    last.update_index + 1,
                    last.env_steps,
                    last.mean_reward
                );
            }
            println!("checkpoint: {}", trained.checkpoint.display());
        }
        Command::Evaluate { checkpoint, trajectories } => {
            let cfg = load_config(&cli)?;
            let agent = load_agent(checkpoint)?;
            let k = trajectories.unwrap_or(cfg.eval_trajectories);
            if k == 0 {
                return Err(Error::Config { key: "--trajectories".into(), reason: "must be >= 1".into() });
            }
            let report = evaluate(&agent, &cfg, k)?;
            report.write(out_path(&cli, "evaluation"))?;
            println!("{}", report.summary());
        }
        Command::Ablate { ablation } => {
            let cfg = load_config(&cli)?;
            let ablation: Ablation = ablation.parse()?;
            let report = ablate(&cfg, ablation, out_path(&cli, "ablation"))?;
            println!("{}", report.summary());
        }
        Command::GenWorld { level } => {
            let (spec, params) = match &cli.config {
                Some(_) => {
                    let cfg = load_config(&cli)?;
                    (cfg.forest, cfg.quadrotor)
                }
                None => (ForestSpec::default(), QuadrotorParams::default()),
            };
            let seed = cli.seed.unwrap_or(0);
            let (world, stats) = gen_world(*level, seed, &spec, &params)?;
            let out = out_path(&cli, "world.toml");
            world.save(out)?;
            let spacing = stats.min_spacing.map_or_else(|| "n/a".to_string(), |s| format!("{s:.2} m"));
            println!("obstacles: {}, minimum spacing: {spacing}", stats.obstacle_count);
        }
        Command::Rollout { checkpoint, world } => {
            let cfg = load_config(&cli)?;
            let agent = load_agent(checkpoint)?;
            let world = WorldSpec::load(world)?;
            world.validate(cfg.quadrotor.arm_length)?;
            let rows = rollout(&agent, &cfg, world)?;
            let out = out_path(&cli, "rollout.csv");
            write_rollout(&rows, out)?;
            let last = rows.last().expect("an episode has at least one step");
            println!("{} steps, {} at {:.2} s", rows.len(), last.status, last.t_s);
        }
    }
    Ok(())
}
