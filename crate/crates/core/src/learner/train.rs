use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::normalizer::ObsNormalizer;
use super::policy::{PolicyNet, ValueNet};
use super::ppo::{ppo_update, PpoConfig, PpoOptimizer, UpdateStats};
use crate::env::{Action, Observation, Outcome, VecEnv};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"SRACECKP";
const CHECKPOINT_VERSION: u32 = 1;

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update_index: u64,
    pub env_steps: u64,
    /// Mean return of the episodes that ended during this update's rollout;
    /// NaN when none ended.
    pub mean_reward: f64,
    pub mean_episode_time_s: f64,
    pub crash_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Deterministic actor: frozen normalizer plus the policy mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: PolicyNet,
    pub normalizer: ObsNormalizer,
}

impl Agent {
    pub fn input_dim(&self) -> usize {
        self.policy.input_dim()
    }

    pub fn check_dim(&self, observation_dim: usize) -> Result<()> {
        if self.input_dim() != observation_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: observation_dim,
                context: "policy input vs environment observation",
            });
        }
        Ok(())
    }

    pub fn act(&self, obs: &Observation) -> Action {
        let x = self.normalizer.normalize(obs.as_slice());
        Action(self.policy.forward(&x).0)
    }
}

/// Complete training state. Serializing it is the checkpoint, so a resumed
/// run continues bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trainer {
    config: PpoConfig,
    policy: PolicyNet,
    value: ValueNet,
    optimizer: PpoOptimizer,
    normalizer: ObsNormalizer,
    envs: VecEnv,
    rng: ChaCha8Rng,
    update_index: u64,
    env_steps: u64,
    episode_returns: Vec<f64>,
}

impl Trainer {
    pub fn new(config: PpoConfig, envs: VecEnv, seed: u64) -> Result<Self> {
        config.validate()?;
        if envs.is_empty() {
            return Err(Error::config("num_envs", "need at least one environment"));
        }
        let dim = envs.envs()[0].observation_dim();
        if let Some(bad) = envs.envs().iter().find(|e| e.observation_dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.observation_dim(),
                context: "observation size across environments",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = PolicyNet::new(dim, &config.hidden_sizes, config.init_log_std, &mut rng);
        let value = ValueNet::new(dim, &config.hidden_sizes, &mut rng);
        let optimizer = PpoOptimizer::new(&policy, &value);
        let n = envs.len();
        Ok(Self {
            normalizer: ObsNormalizer::new(dim, config.obs_clip),
            config,
            policy,
            value,
            optimizer,
            envs,
            rng,
            update_index: 0,
            env_steps: 0,
            episode_returns: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.config
    }

    pub fn policy(&self) -> &PolicyNet {
        &self.policy
    }

    pub fn value(&self) -> &ValueNet {
        &self.value
    }

    pub fn normalizer(&self) -> &ObsNormalizer {
        &self.normalizer
    }

    pub fn envs(&self) -> &VecEnv {
        &self.envs
    }

    pub fn update_index(&self) -> u64 {
        self.update_index
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn is_done(&self) -> bool {
        self.env_steps >= self.config.total_env_steps
    }

    /// Snapshot for evaluation with the normalizer frozen.
    pub fn agent(&self) -> Agent {
        let mut normalizer = self.normalizer.clone();
        normalizer.freeze();
        Agent {
            policy: self.policy.clone(),
            normalizer,
        }
    }

    /// Collects one rollout, computes advantages and runs the PPO update.
    pub fn run_update(&mut self) -> Result<UpdateRecord> {
        let n = self.envs.len();
        let dim = self.normalizer.dim();
        let horizon = self.config.rollout_horizon;
        let mut buffer = RolloutBuffer::new(horizon, n, dim);
        let mut batch = Array2::zeros((n, dim));
        let mut finished_returns = Vec::new();
        let mut finished_times = Vec::new();
        let mut crashes = 0usize;

        let mut obs = self.envs.observations();
        for _ in 0..horizon {
            self.normalizer.update(obs.iter().map(Observation::as_slice));
            self.fill_batch(&obs, &mut batch);
            let samples = self.policy.sample_batch(batch.view(), false, &mut self.rng);
            let values = self.value.predict(batch.view());
            let actions: Vec<Action> = samples.iter().map(|s| s.action).collect();
            let results = self.envs.step(&actions)?;
            for (e, res) in results.iter().enumerate() {
                let reward = res.step.reward.total;
                let outcome = res.step.status.outcome;
                buffer.push(
                    batch.row(e).as_slice().expect("contiguous row"),
                    samples[e].raw,
                    samples[e].log_prob,
                    reward,
                    values[e],
                    outcome.is_terminal(),
                );
                self.episode_returns[e] += reward;
                if outcome.is_terminal() {
                    finished_returns.push(self.episode_returns[e]);
                    finished_times.push(res.step.status.elapsed_time);
                    if outcome == Outcome::Collided {
                        crashes += 1;
                    }
                    self.episode_returns[e] = 0.0;
                }
            }
            obs = results.iter().map(|r| r.next_observation().clone()).collect();
        }
        self.fill_batch(&obs, &mut batch);
        buffer.last_values = self.value.predict(batch.view()).to_vec();
        buffer.compute_gae(self.config.gamma, self.config.gae_lambda);

        let stats: UpdateStats = ppo_update(
            &mut self.policy,
            &mut self.value,
            &mut self.optimizer,
            &buffer,
            &self.config,
            &mut self.rng,
        )?;
        self.env_steps += (horizon * n) as u64;
        let record = UpdateRecord {
            update_index: self.update_index,
            env_steps: self.env_steps,
            mean_reward: mean_or_nan(&finished_returns),
            mean_episode_time_s: mean_or_nan(&finished_times),
            crash_fraction: if finished_returns.is_empty() {
                f64::NAN
            } else {
                crashes as f64 / finished_returns.len() as f64
            },
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
        };
        self.update_index += 1;
        Ok(record)
    }

    /// Runs updates until the step budget is spent, handing each record to
    /// `on_update` (logging, checkpointing).
    pub fn train(&mut self, mut on_update: impl FnMut(&Trainer, &UpdateRecord) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let record = self.run_update()?;
            on_update(self, &record)?;
        }
        Ok(())
    }

    fn fill_batch(&self, obs: &[Observation], batch: &mut Array2<f64>) {
        for (e, o) in obs.iter().enumerate() {
            let mut row = batch.row_mut(e);
            self.normalizer
                .normalize_into(o.as_slice(), row.as_slice_mut().expect("contiguous row"));
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(CHECKPOINT_MAGIC).map_err(|e| Error::io(&tmp, e))?;
            w.write_all(&CHECKPOINT_VERSION.to_le_bytes())
                .map_err(|e| Error::io(&tmp, e))?;
            bincode::serialize_into(&mut w, self).map_err(|e| Error::Checkpoint {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        // Rename last so an interrupted write never clobbers a good checkpoint.
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 8];
        let mut version = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        r.read_exact(&mut version).map_err(|e| bad(e.to_string()))?;
        let version = u32::from_le_bytes(version);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        bincode::deserialize_from(r).map_err(|e| bad(e.to_string()))
    }
}

fn mean_or_nan(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Append-only CSV training log.
pub struct TrainingLog {
    writer: csv::Writer<File>,
}

impl TrainingLog {
    /// Opens `path` for appending; the header is written only for a new file.
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn append(&mut self, record: &UpdateRecord) -> Result<()> {
        self.writer.serialize(record)?;
        self.writer.flush().map_err(|e| Error::io("training log", e))
    }

    pub fn read(path: &Path) -> Result<Vec<UpdateRecord>> {
        let mut reader = csv::Reader::from_path(path)?;
        reader.deserialize().map(|r| r.map_err(Error::from)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadrotorParams;
    use crate::env::{Env, EnvConfig, WorldSource};
    use crate::world::{split_s_world, RandomizationSpec};

    fn tiny_trainer(seed: u64) -> Trainer {
        let envs = (0..3)
            .map(|i| {
                Env::new(
                    EnvConfig::default(),
                    QuadrotorParams::default(),
                    RandomizationSpec::default(),
                    WorldSource::Fixed(split_s_world()),
                    seed * 1000 + i,
                )
                .unwrap()
            })
            .collect();
        let config = PpoConfig {
            rollout_horizon: 16,
            epochs_per_update: 2,
            minibatch_size: 16,
            num_envs: 3,
            hidden_sizes: vec![16, 16],
            total_env_steps: 3 * 16 * 3,
            ..PpoConfig::default()
        };
        Trainer::new(config, VecEnv::new(envs), seed).unwrap()
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");

        let mut straight = tiny_trainer(5);
        let mut straight_log = Vec::new();
        straight.train(|_, r| {
            straight_log.push(*r);
            Ok(())
        }).unwrap();

        let mut first = tiny_trainer(5);
        let mut resumed_log = vec![first.run_update().unwrap()];
        first.save_checkpoint(&path).unwrap();
        drop(first);
        let mut resumed = Trainer::load_checkpoint(&path).unwrap();
        resumed.train(|_, r| {
            resumed_log.push(*r);
            Ok(())
        }).unwrap();

        assert_eq!(straight.policy(), resumed.policy());
        assert_eq!(straight.value(), resumed.value());
        assert_eq!(straight.normalizer(), resumed.normalizer());
        assert_eq!(format!("{straight_log:?}"), format!("{resumed_log:?}"));
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"hello world, not a checkpoint").unwrap();
        assert!(matches!(Trainer::load_checkpoint(&path), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn log_round_trip_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let mut t = tiny_trainer(1);
        let a = t.run_update().unwrap();
        TrainingLog::open(&path).unwrap().append(&a).unwrap();
        let b = t.run_update().unwrap();
        TrainingLog::open(&path).unwrap().append(&b).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("update_index,env_steps,mean_reward,mean_episode_time_s,crash_fraction"));
        let back = TrainingLog::read(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].env_steps, b.env_steps);
        assert_eq!(back[0].policy_loss.to_bits(), a.policy_loss.to_bits());
    }
}
