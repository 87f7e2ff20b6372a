use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadrotorParams;
use crate::env::{Env, EnvConfig, VecEnv, WorldSource};
use crate::error::{Error, Result};
use crate::learner::PpoConfig;
use crate::world::{generate_forest, split_s_world, ForestLevel, ForestSpec, RandomizationSpec, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Bundled Split-S course with obstacles.
    SplitSObstacles,
    /// One forest generated from the experiment seed, shared by every episode.
    ForestFixed,
    /// A fresh forest every episode, level drawn from `level_range`.
    ForestRandomized,
    /// A world loaded from `world_file`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// Level used by `forest_fixed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest_level: Option<ForestLevel>,
    /// Levels sampled by `forest_randomized`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_range: Option<Vec<ForestLevel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world_file: Option<PathBuf>,
    #[serde(default = "default_eval_trajectories")]
    pub eval_trajectories: usize,
    /// Updates between checkpoints; the final state is always saved.
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: u64,
    #[serde(default)]
    pub quadrotor: QuadrotorParams,
    pub env: EnvConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub randomization: RandomizationSpec,
    #[serde(default)]
    pub forest: ForestSpec,
}

fn default_eval_trajectories() -> usize {
    1000
}

fn default_checkpoint_interval() -> u64 {
    10
}

impl ExperimentConfig {
    /// A config with default sections for the given scenario.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            seed: 0,
            forest_level: None,
            level_range: None,
            world_file: None,
            eval_trajectories: default_eval_trajectories(),
            checkpoint_interval: default_checkpoint_interval(),
            quadrotor: QuadrotorParams::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            randomization: RandomizationSpec::default(),
            forest: ForestSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_string();
            Error::config(key, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. A relative `world_file` is
    /// resolved against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(w) = &cfg.world_file {
            if w.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.world_file = Some(base.join(w));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrotor.validate()?;
        self.env.validate()?;
        self.ppo.validate()?;
        self.randomization.validate()?;
        if self.eval_trajectories == 0 {
            return Err(Error::config("eval_trajectories", "must be >= 1"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::config("checkpoint_interval", "must be >= 1"));
        }
        match self.scenario {
            Scenario::Custom if self.world_file.is_none() => {
                Err(Error::config("world_file", "required by scenario `custom`"))
            }
            Scenario::ForestRandomized if self.level_range.as_ref().is_some_and(Vec::is_empty) => {
                Err(Error::config("level_range", "must name at least one level"))
            }
            _ => Ok(()),
        }
    }

    /// Randomization with the scenario's forest levels filled in.
    pub fn effective_randomization(&self) -> RandomizationSpec {
        let mut r = self.randomization.clone();
        if self.scenario == Scenario::ForestRandomized {
            if let Some(levels) = &self.level_range {
                r.forest_levels = levels.clone();
            }
        }
        r
    }

    /// Where episode worlds come from. For `forest_fixed` the forest is
    /// generated once from the experiment seed.
    pub fn world_source(&self) -> Result<WorldSource> {
        Ok(match self.scenario {
            Scenario::SplitSObstacles => WorldSource::Fixed(split_s_world()),
            Scenario::ForestFixed => {
                let level = self.forest_level.unwrap_or(ForestLevel::One);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, WORLD_STREAM, 0));
                WorldSource::Fixed(generate_forest(level, &self.forest, self.quadrotor.arm_length, &mut rng)?)
            }
            Scenario::ForestRandomized => WorldSource::Forest(self.forest.clone()),
            Scenario::Custom => {
                let path = self.world_file.as_ref().expect("validated");
                let world = WorldSpec::load(path)?;
                world.validate(self.quadrotor.arm_length)?;
                WorldSource::Fixed(world)
            }
        })
    }

    /// One environment with its own seed drawn from `stream`.
    pub fn make_env(&self, source: &WorldSource, stream: u64, index: u64) -> Result<Env> {
        Env::new(
            self.env.clone(),
            self.quadrotor.clone(),
            self.effective_randomization(),
            source.clone(),
            derive_seed(self.seed, stream, index),
        )
    }

    /// The `ppo.num_envs` training environments.
    pub fn training_envs(&self) -> Result<VecEnv> {
        let source = self.world_source()?;
        let envs = (0..self.ppo.num_envs as u64)
            .map(|i| self.make_env(&source, TRAIN_STREAM, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(VecEnv::new(envs))
    }
}

pub(crate) const TRAIN_STREAM: u64 = 1;
pub(crate) const EVAL_STREAM: u64 = 2;
const WORLD_STREAM: u64 = 3;

/// Independent seed for item `index` of random stream `stream`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}
