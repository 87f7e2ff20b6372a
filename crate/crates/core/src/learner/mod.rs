//! PPO learner: networks, rollout storage, updates and the training loop.

pub mod buffer;
pub mod nn;
pub mod normalizer;
pub mod policy;
pub mod ppo;
pub mod train;

pub use buffer::RolloutBuffer;
pub use normalizer::ObsNormalizer;
pub use policy::{PolicyNet, SampledAction, ValueNet, ACTION_DIM};
pub use ppo::{PpoConfig, UpdateStats};
pub use train::{Agent, Trainer, TrainingLog, UpdateRecord};
