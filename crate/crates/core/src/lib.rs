//! Quadrotor racing through waypoint sequences in obstacle fields: a
//! rigid-body simulator, the racing MDP with progress, safety and terminal
//! rewards, a PPO trainer, and the evaluation harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod learner;
pub mod world;

pub use dynamics::{QuadrotorParams, QuadrotorState};
pub use env::{Action, Env, EnvConfig, Observation, Outcome, RewardBreakdown, VecEnv};
pub use error::{Error, Result};
pub use world::{RandomizationSpec, WorldSpec};
