//! Experiment engine behind the command line: configuration, training runs,
//! evaluation, ablations, world generation and trajectory export.

mod config;
mod eval;
mod experiment;

pub use config::{derive_seed, ExperimentConfig, Scenario};
pub use eval::{evaluate, run_episode, EvaluationReport, TrajectoryRecord};
pub use experiment::{
    ablate, gen_world, load_agent, rollout, train_experiment, world_stats, write_rollout, Ablation,
    AblationReport, RolloutRow, TrainOutput, WorldStats, CHECKPOINT_FILE, FROZEN_CONFIG_FILE,
    TRAINING_LOG_FILE,
};
