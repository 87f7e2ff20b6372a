use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::eval::{evaluate, EvaluationReport};
use crate::dynamics::QuadrotorParams;
use crate::env::{Env, WorldSource};
use crate::error::{Error, Result};
use crate::learner::{Agent, Trainer, TrainingLog, UpdateRecord};
use crate::world::min_pair_distance;
use crate::world::{generate_forest, ForestLevel, ForestSpec, RandomizationSpec, WorldSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAINING_LOG_FILE: &str = "training_log.csv";
pub const FROZEN_CONFIG_FILE: &str = "config.toml";

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub records: Vec<UpdateRecord>,
    pub agent: Agent,
}

/// Trains under `config`, writing the frozen config, the training log and
/// `checkpoint.bin` into `out_dir`. With `resume`, continues from an
/// existing checkpoint there and drops log rows written after it.
pub fn train_experiment(config: &ExperimentConfig, out_dir: &Path, resume: bool) -> Result<TrainOutput> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let log_path = out_dir.join(TRAINING_LOG_FILE);

    let mut trainer = if resume && checkpoint.exists() {
        let t = Trainer::load_checkpoint(&checkpoint)?;
        if t.config() != &config.ppo {
            return Err(Error::config("ppo", "differs from the configuration stored in the checkpoint"));
        }
        truncate_log(&log_path, t.update_index())?;
        t
    } else {
        if log_path.exists() {
            std::fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
        }
        Trainer::new(config.ppo.clone(), config.training_envs()?, config.seed)?
    };
    config.save(&out_dir.join(FROZEN_CONFIG_FILE))?;

    let mut log = TrainingLog::open(&log_path)?;
    let mut records = Vec::new();
    let interval = config.checkpoint_interval;
    trainer.train(|t, record| {
        log.append(record)?;
        records.push(*record);
        if t.update_index() % interval == 0 {
            t.save_checkpoint(&checkpoint)?;
        }
        Ok(())
    })?;
    trainer.save_checkpoint(&checkpoint)?;
    Ok(TrainOutput {
        checkpoint,
        log: log_path,
        records,
        agent: trainer.agent(),
    })
}

fn truncate_log(path: &Path, keep_below: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<UpdateRecord> = TrainingLog::read(path)?
        .into_iter()
        .filter(|r| r.update_index < keep_below)
        .collect();
    std::fs::remove_file(path).map_err(|e| Error::io(path, e))?;
    let mut log = TrainingLog::open(path)?;
    for r in &kept {
        log.append(r)?;
    }
    Ok(())
}

/// Loads the evaluation agent (frozen normalizer) from a checkpoint.
pub fn load_agent(checkpoint: &Path) -> Result<Agent> {
    Ok(Trainer::load_checkpoint(checkpoint)?.agent())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoSafetyReward,
    NoTerminalTime,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoSafetyReward => "no_safety_reward",
            Ablation::NoTerminalTime => "no_terminal_time",
        }
    }

    /// The config with the ablated reward term switched off.
    pub fn apply(self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut c = config.clone();
        match self {
            Ablation::NoSafetyReward => c.env.lambda3 = 0.0,
            Ablation::NoTerminalTime => c.env.lambda4 = 0.0,
        }
        c
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no_safety_reward" => Ok(Ablation::NoSafetyReward),
            "no_terminal_time" => Ok(Ablation::NoTerminalTime),
            other => Err(Error::config(
                "ablation",
                format!("unknown ablation `{other}` (expected no_safety_reward or no_terminal_time)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub ablation: Ablation,
    pub full: EvaluationReport,
    pub ablated: EvaluationReport,
}

impl AblationReport {
    pub fn summary(&self) -> String {
        format!(
            "full reward: {}\n{}: {}",
            self.full.summary(),
            self.ablation.name(),
            self.ablated.summary()
        )
    }
}

/// Trains and evaluates the full and the ablated configuration with the
/// same seeds, under `out_dir/full` and `out_dir/<ablation>`.
pub fn ablate(config: &ExperimentConfig, ablation: Ablation, out_dir: &Path) -> Result<AblationReport> {
    let mut reports = Vec::with_capacity(2);
    for (name, cfg) in [("full", config.clone()), (ablation.name(), ablation.apply(config))] {
        let dir = out_dir.join(name);
        let trained = train_experiment(&cfg, &dir, false)?;
        let report = evaluate(&trained.agent, &cfg, cfg.eval_trajectories)?;
        report.write(&dir.join("evaluation"))?;
        reports.push(report);
    }
    let ablated = reports.pop().expect("two reports");
    let full = reports.pop().expect("two reports");
    let report = AblationReport { ablation, full, ablated };
    let path = out_dir.join("ablation.toml");
    std::fs::write(&path, toml::to_string(&report).expect("report serializes"))
        .map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldStats {
    pub obstacle_count: usize,
    /// Smallest center-to-center distance between two obstacles.
    pub min_spacing: Option<f64>,
}

pub fn world_stats(world: &WorldSpec) -> WorldStats {
    WorldStats {
        obstacle_count: world.obstacles.len(),
        min_spacing: min_pair_distance(&world.obstacles),
    }
}

/// Generates a forest world for `level` from `seed`.
pub fn gen_world(level: u8, seed: u64, spec: &ForestSpec, params: &QuadrotorParams) -> Result<(WorldSpec, WorldStats)> {
    let level = ForestLevel::try_from(level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = generate_forest(level, spec, params.arm_length, &mut rng).map_err(|e| match e {
        Error::WorldGeneration { level, reason } => Error::WorldGeneration {
            level,
            reason: format!("{reason} (seed {seed})"),
        },
        other => other,
    })?;
    let stats = world_stats(&world);
    Ok((world, stats))
}

/// One row of the rollout CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub t_s: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub r_progress: f64,
    pub r_safety: f64,
    pub r_terminal: f64,
    pub status: String,
}

/// One deterministic episode in `world` from its nominal start, one row per
/// control step.
pub fn rollout(agent: &Agent, config: &ExperimentConfig, world: WorldSpec) -> Result<Vec<RolloutRow>> {
    agent.check_dim(config.env.observation_dim())?;
    let mut env = Env::new(
        config.env.clone(),
        config.quadrotor.clone(),
        RandomizationSpec::none(),
        WorldSource::Fixed(world),
        config.seed,
    )?;
    let mut obs = env.observation();
    let mut rows = Vec::new();
    loop {
        let step = match env.step(&agent.act(&obs)) {
            Ok(s) => s,
            Err(Error::SimulationDiverged) => env.abort(),
            Err(e) => return Err(e),
        };
        let s = env.state();
        let q = s.attitude;
        rows.push(RolloutRow {
            t_s: step.status.elapsed_time,
            px: s.position.x,
            py: s.position.y,
            pz: s.position.z,
            vx: s.velocity.x,
            vy: s.velocity.y,
            vz: s.velocity.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
            wx: s.body_rate.x,
            wy: s.body_rate.y,
            wz: s.body_rate.z,
            f1: s.rotor_thrusts[0],
            f2: s.rotor_thrusts[1],
            f3: s.rotor_thrusts[2],
            f4: s.rotor_thrusts[3],
            r_progress: step.reward.progress,
            r_safety: step.reward.safety,
            r_terminal: step.reward.terminal,
            status: step.status.outcome.label().to_string(),
        });
        if step.status.outcome.is_terminal() {
            return Ok(rows);
        }
        obs = step.observation;
    }
}

pub fn write_rollout(rows: &[RolloutRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
