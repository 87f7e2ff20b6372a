use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Action, Env, Observation, StepResult};
use crate::error::{Error, Result};

/// Outcome of stepping one slot of a [`VecEnv`].
#[derive(Debug, Clone, PartialEq)]
pub struct VecStepResult {
    /// The record of the step itself, including the terminal observation.
    pub step: StepResult,
    /// First observation of the next episode when this step ended one.
    pub reset_observation: Option<Observation>,
    /// The integration diverged; the episode was aborted as a crash.
    pub diverged: bool,
}

impl VecStepResult {
    /// The observation the policy should act on next.
    pub fn next_observation(&self) -> &Observation {
        self.reset_observation.as_ref().unwrap_or(&self.step.observation)
    }
}

/// A batch of independent environments stepped in lockstep with automatic
/// reset. Each environment owns its state and random stream, so parallel and
/// sequential stepping produce identical results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VecEnv {
    envs: Vec<Env>,
    parallel: bool,
}

impl VecEnv {
    pub fn new(envs: Vec<Env>) -> Self {
        Self { envs, parallel: true }
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.envs.iter().map(Env::observation).collect()
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<VecStepResult>> {
        if actions.len() != self.envs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.envs.len(),
                actual: actions.len(),
                context: "one action per environment",
            });
        }
        if self.parallel {
            self.envs
                .par_iter_mut()
                .zip(actions.par_iter())
                .map(|(env, a)| step_one(env, a))
                .collect()
        } else {
            self.envs
                .iter_mut()
                .zip(actions)
                .map(|(env, a)| step_one(env, a))
                .collect()
        }
    }
}

fn step_one(env: &mut Env, action: &Action) -> Result<VecStepResult> {
    let (step, diverged) = match env.step(action) {
        Ok(step) => (step, false),
        Err(Error::SimulationDiverged) => (env.abort(), true),
        Err(e) => return Err(e),
    };
    let reset_observation = if step.status.outcome.is_terminal() {
        Some(env.reset()?)
    } else {
        None
    };
    Ok(VecStepResult {
        step,
        reset_observation,
        diverged,
    })
}
