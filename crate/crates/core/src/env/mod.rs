//! The racing MDP: observation layout, action decoding, rewards and the
//! episode lifecycle, plus a vectorized stepper over many environments.

mod config;
mod reward;
mod vec_env;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{body_rate_controller, rk4_step, BodyCommand, QuadrotorParams, QuadrotorState};
use crate::error::{Error, Result};
use crate::world::{
    check_collision, generate_forest, jitter_designated_waypoint, nearest_obstacle_distances_into,
    randomize_initial_state, randomize_params, waypoint_passed, CollisionStatus, ForestSpec,
    RandomizationSpec, WorldSpec,
};

pub use config::{ActionRanges, EnvConfig};
pub use reward::{progress_reward, safety_reward, RewardBreakdown};
pub use vec_env::{VecEnv, VecStepResult};

/// Flat policy input: position, row-major rotation matrix, velocity, body
/// rate, the next `j` waypoint centers, and the `N` nearest obstacle surface
/// distances in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rotation_block(&self) -> &[f64] {
        &self.0[3..12]
    }

    pub fn obstacle_block(&self, n: usize) -> &[f64] {
        &self.0[self.0.len() - n..]
    }
}

/// Normalized command `[u_thrust, u_wx, u_wy, u_wz]`, each in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action(pub [f64; 4]);

impl Action {
    /// Maps the normalized command to collective thrust and body-rate
    /// setpoint. Components outside [-1, 1] are clamped first.
    pub fn decode(&self, ranges: &ActionRanges) -> BodyCommand {
        let u = self.0.map(|x| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) });
        let [lo, hi] = ranges.thrust;
        BodyCommand {
            collective_thrust: lo + (u[0] + 1.0) * 0.5 * (hi - lo),
            body_rate: Vector3::new(u[1], u[2], u[3]) * ranges.body_rate_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Collided,
    /// Track finished after `time` seconds.
    Completed { time: f64 },
    Timeout,
}

impl Outcome {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Outcome::Running)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Running => "Running",
            Outcome::Collided => "Collided",
            Outcome::Completed { .. } => "Completed",
            Outcome::Timeout => "Timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStatus {
    pub outcome: Outcome,
    pub elapsed_time: f64,
    pub next_waypoint_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub status: EpisodeStatus,
}

/// Where each episode's world comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WorldSource {
    /// One world for every episode; its designated waypoint, if any, is
    /// jittered on reset.
    Fixed(WorldSpec),
    /// A fresh forest per episode at a level drawn from the randomization
    /// spec.
    Forest(ForestSpec),
}

pub fn observe(state: &QuadrotorState, world: &WorldSpec, next_waypoint: usize, config: &EnvConfig) -> Observation {
    let mut obs = Vec::with_capacity(config.observation_dim());
    let mut scratch = Vec::with_capacity(config.n_obstacles);
    observe_into(state, world, next_waypoint, config, &mut obs, &mut scratch);
    Observation(obs)
}

fn observe_into(
    state: &QuadrotorState,
    world: &WorldSpec,
    next_waypoint: usize,
    config: &EnvConfig,
    obs: &mut Vec<f64>,
    distances: &mut Vec<f64>,
) {
    obs.clear();
    obs.extend(state.position.iter());
    let rot = state.rotation();
    for r in 0..3 {
        for c in 0..3 {
            obs.push(rot[(r, c)]);
        }
    }
    obs.extend(state.velocity.iter());
    obs.extend(state.body_rate.iter());
    let last = world.track.len() - 1;
    for k in 0..config.lookahead_j {
        let idx = (next_waypoint + k).min(last);
        obs.extend(world.track[idx].center.iter());
    }
    nearest_obstacle_distances_into(&state.position, &world.obstacles, config.n_obstacles, config.far_distance, distances);
    obs.extend(distances.iter());
}

/// One simulated racing episode at a time, with its own random stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Env {
    config: EnvConfig,
    calibrated: QuadrotorParams,
    randomization: RandomizationSpec,
    source: WorldSource,
    world: WorldSpec,
    params: QuadrotorParams,
    state: QuadrotorState,
    prev_position: Vector3<f64>,
    next_waypoint: usize,
    steps: u64,
    outcome: Outcome,
    rng: ChaCha8Rng,
}

impl Env {
    /// Builds an environment and performs the first reset.
    pub fn new(
        config: EnvConfig,
        calibrated: QuadrotorParams,
        randomization: RandomizationSpec,
        source: WorldSource,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        calibrated.validate()?;
        randomization.validate()?;
        let placeholder = match &source {
            WorldSource::Fixed(w) => {
                w.validate(calibrated.arm_length)?;
                w.clone()
            }
            WorldSource::Forest(spec) => WorldSpec {
                track: spec.waypoints(),
                obstacles: Vec::new(),
                bounds: crate::world::Bounds::new(spec.bounds_min, spec.bounds_max),
                safety_margin: spec.safety_margin,
                start: Vector3::from(spec.start),
                randomized_waypoint: None,
            },
        };
        let state = QuadrotorState::hover_at(placeholder.start, &calibrated);
        let mut env = Self {
            prev_position: state.position,
            params: calibrated.clone(),
            config,
            calibrated,
            randomization,
            source,
            world: placeholder,
            state,
            next_waypoint: 0,
            steps: 0,
            outcome: Outcome::Running,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn world(&self) -> &WorldSpec {
        &self.world
    }

    pub fn params(&self) -> &QuadrotorParams {
        &self.params
    }

    pub fn state(&self) -> &QuadrotorState {
        &self.state
    }

    pub fn status(&self) -> EpisodeStatus {
        EpisodeStatus {
            outcome: self.outcome,
            elapsed_time: self.elapsed_time(),
            next_waypoint_index: self.next_waypoint,
        }
    }

    pub fn elapsed_time(&self) -> f64 {
        self.steps as f64 * self.config.control_dt
    }

    pub fn observation_dim(&self) -> usize {
        self.config.observation_dim()
    }

    pub fn observation(&self) -> Observation {
        observe(&self.state, &self.world, self.next_waypoint, &self.config)
    }

    /// Starts a new episode: perturbed parameters, a (possibly new) world and
    /// a perturbed initial state.
    pub fn reset(&mut self) -> Result<Observation> {
        self.params = randomize_params(&self.calibrated, &self.randomization, &mut self.rng);
        self.world = match &self.source {
            WorldSource::Fixed(w) => {
                jitter_designated_waypoint(w, &self.randomization, self.calibrated.arm_length, &mut self.rng)
            }
            WorldSource::Forest(spec) => {
                let levels = &self.randomization.forest_levels;
                if levels.is_empty() {
                    return Err(Error::config("forest_levels", "must not be empty"));
                }
                let level = levels[self.rng.random_range(0..levels.len())];
                generate_forest(level, spec, self.calibrated.arm_length, &mut self.rng)?
            }
        };
        let base = QuadrotorState::hover_at(self.world.start, &self.params);
        self.state = randomize_initial_state(&base, &self.randomization, &self.params, &mut self.rng);
        self.prev_position = self.state.position;
        self.next_waypoint = 0;
        self.steps = 0;
        self.outcome = Outcome::Running;
        Ok(self.observation())
    }

    /// Advances one control period.
    ///
    /// Order within a step: integrate, advance past every waypoint now
    /// reached, test for collision, then assemble the reward. A step that
    /// both collides and finishes the track counts as a collision.
    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        assert!(
            !self.outcome.is_terminal(),
            "step called on a finished episode; call reset first"
        );
        let cmd = action.decode(&self.config.action_ranges);
        let h = self.config.substep_dt();
        let mut state = self.state.clone();
        for _ in 0..self.config.sim_substeps {
            let alloc = body_rate_controller(&state, &cmd, &self.params);
            state = rk4_step(&state, &alloc.thrusts, h, &self.params)?;
        }
        self.state = state;
        self.steps += 1;
        let elapsed = self.elapsed_time();

        let target = self.world.track[self.next_waypoint].center;
        let p = self.state.position;
        while self.next_waypoint < self.world.track.len()
            && waypoint_passed(&p, &self.world.track[self.next_waypoint])
        {
            self.next_waypoint += 1;
        }
        let finished = self.next_waypoint == self.world.track.len();
        let collided = check_collision(&p, &self.world, self.params.arm_length) != CollisionStatus::Free;

        // The observation still shows the final waypoint once the track is done.
        let observed_index = self.next_waypoint.min(self.world.track.len() - 1);
        let observation = observe(&self.state, &self.world, observed_index, &self.config);
        let progress = progress_reward(&target, &self.prev_position, &p, &self.state.body_rate, &self.config);
        let safety = safety_reward(observation.obstacle_block(self.config.n_obstacles), &self.config);

        let (outcome, terminal) = if collided {
            (Outcome::Collided, self.config.r_collision)
        } else if finished {
            (Outcome::Completed { time: elapsed }, self.config.lambda4 * elapsed)
        } else if self.steps >= self.config.max_steps() {
            (Outcome::Timeout, 0.0)
        } else {
            (Outcome::Running, 0.0)
        };
        self.outcome = outcome;
        self.prev_position = p;

        Ok(StepResult {
            observation,
            reward: RewardBreakdown::new(progress, safety, terminal),
            status: self.status(),
        })
    }

    /// Marks the running episode as crashed after a diverged integration.
    pub(crate) fn abort(&mut self) -> StepResult {
        self.outcome = Outcome::Collided;
        let observation = self.observation();
        StepResult {
            observation,
            reward: RewardBreakdown::new(0.0, 0.0, self.config.r_collision),
            status: self.status(),
        }
    }
}
