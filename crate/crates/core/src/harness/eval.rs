use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, EVAL_STREAM};
use crate::env::{Env, Outcome};
use crate::error::{Error, Result};
use crate::learner::Agent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    /// Collided, Completed or Timeout.
    pub status: String,
    pub time_s: f64,
    pub total_reward: f64,
    pub waypoints_passed: usize,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub total: usize,
    pub success_count: usize,
    pub crash_count: usize,
    pub timeout_count: usize,
    /// Percentage of trajectories that ended in a collision.
    pub crash_ratio: f64,
    /// Mean completion time over successful trajectories; absent without any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub average_time: Option<f64>,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryRecord>,
}

impl EvaluationReport {
    pub fn from_records(trajectories: Vec<TrajectoryRecord>) -> Self {
        let total = trajectories.len();
        let count = |s: &str| trajectories.iter().filter(|t| t.status == s).count();
        let success_count = count(Outcome::Completed { time: 0.0 }.label());
        let crash_count = count(Outcome::Collided.label());
        let timeout_count = count(Outcome::Timeout.label());
        let times: Vec<f64> = trajectories
            .iter()
            .filter(|t| t.status == Outcome::Completed { time: 0.0 }.label())
            .map(|t| t.time_s)
            .collect();
        let average_time = (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64);
        Self {
            total,
            success_count,
            crash_count,
            timeout_count,
            crash_ratio: if total == 0 {
                0.0
            } else {
                100.0 * crash_count as f64 / total as f64
            },
            average_time,
            trajectories,
        }
    }

    pub fn success_rate(&self) -> f64 {
        self.success_count as f64 / self.total.max(1) as f64
    }

    /// Two-decimal human summary.
    pub fn summary(&self) -> String {
        let time = self
            .average_time
            .map_or_else(|| "n/a".to_string(), |t| format!("{t:.2} s"));
        format!(
            "average time {time}, crash ratio {:.2}% ({} completed, {} crashed, {} timed out of {})",
            self.crash_ratio, self.success_count, self.crash_count, self.timeout_count, self.total
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    /// Writes `report.toml` and `trajectories.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let report = dir.join("report.toml");
        std::fs::write(&report, self.to_toml()).map_err(|e| Error::io(&report, e))?;
        let mut w = csv::Writer::from_path(dir.join("trajectories.csv"))?;
        for t in &self.trajectories {
            w.serialize(t)?;
        }
        w.flush().map_err(|e| Error::io(dir.join("trajectories.csv"), e))
    }
}

/// Flies one deterministic episode from a freshly reset environment.
pub fn run_episode(agent: &Agent, env: &mut Env) -> Result<(Outcome, f64, f64, bool)> {
    let mut obs = env.observation();
    let mut total = 0.0;
    loop {
        let action = agent.act(&obs);
        let step = match env.step(&action) {
            Ok(s) => s,
            Err(Error::SimulationDiverged) => {
                let s = env.abort();
                return Ok((s.status.outcome, s.status.elapsed_time, total + s.reward.total, true));
            }
            Err(e) => return Err(e),
        };
        total += step.reward.total;
        if step.status.outcome.is_terminal() {
            return Ok((step.status.outcome, step.status.elapsed_time, total, false));
        }
        obs = step.observation;
    }
}

/// `k` deterministic-policy trajectories, each from its own seeded
/// environment. Results do not depend on thread scheduling.
pub fn evaluate(agent: &Agent, config: &ExperimentConfig, k: usize) -> Result<EvaluationReport> {
    agent.check_dim(config.env.observation_dim())?;
    let source = config.world_source()?;
    let records = (0..k)
        .into_par_iter()
        .map(|i| {
            let mut env = config.make_env(&source, EVAL_STREAM, i as u64)?;
            let (outcome, time, total, diverged) = run_episode(agent, &mut env)?;
            Ok(TrajectoryRecord {
                index: i,
                status: outcome.label().to_string(),
                time_s: time,
                total_reward: total,
                waypoints_passed: env.status().next_waypoint_index,
                diverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::from_records(records))
}
