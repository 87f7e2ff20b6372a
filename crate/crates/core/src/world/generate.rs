use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    Bounds, Obstacle, Waypoint, WorldSpec, DEFAULT_OBSTACLE_RADIUS, DEFAULT_SAFETY_MARGIN,
};
use crate::error::{Error, Result};

/// Forest course waypoints, in flight order.
const FOREST_WAYPOINTS: [[f64; 3]; 9] = [
    [-20.0, 0.0, 1.12],
    [-15.0, -5.0, 1.12],
    [-10.0, -10.0, 1.12],
    [-5.0, -5.0, 1.12],
    [0.0, -10.0, 3.53],
    [5.0, -5.0, 1.12],
    [10.0, 0.0, 3.53],
    [15.0, 5.0, 3.53],
    [20.0, 0.0, 1.12],
];

pub const FOREST_BOUNDS: ([f64; 3], [f64; 3]) = ([-25.0, -15.0, 0.0], [25.0, 10.0, 6.0]);
pub const FOREST_START: [f64; 3] = [-22.0, 0.0, 2.0];

const SPLIT_S_ASSET: &str = include_str!("../../assets/split_s.toml");

pub fn forest_track() -> Vec<Waypoint> {
    FOREST_WAYPOINTS.iter().map(|&c| Waypoint::new(c)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ForestLevel {
    One,
    Two,
    Three,
}

impl ForestLevel {
    pub fn number(self) -> u8 {
        match self {
            ForestLevel::One => 1,
            ForestLevel::Two => 2,
            ForestLevel::Three => 3,
        }
    }

    /// Draws the minimum center-to-center spacing for one world.
    fn sample_spacing<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            ForestLevel::One => 5.0,
            ForestLevel::Two => rng.random_range(3.0..=5.0),
            ForestLevel::Three => rng.random_range(1.0..=3.0),
        }
    }

    /// Largest allowed realized minimum spacing, if the level has one.
    fn max_spacing(self) -> Option<f64> {
        match self {
            ForestLevel::One => None,
            ForestLevel::Two => Some(5.0),
            ForestLevel::Three => Some(3.0),
        }
    }

    fn index(self) -> usize {
        self.number() as usize - 1
    }
}

impl TryFrom<u8> for ForestLevel {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(ForestLevel::One),
            2 => Ok(ForestLevel::Two),
            3 => Ok(ForestLevel::Three),
            _ => Err(Error::config("forest_level", format!("must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<ForestLevel> for u8 {
    fn from(l: ForestLevel) -> u8 {
        l.number()
    }
}

/// Layout inputs for procedural forests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSpec {
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
    /// Track flown through the forest; empty means the standard nine-waypoint course.
    pub track: Vec<[f64; 3]>,
    pub start: [f64; 3],
    pub obstacle_radius: f64,
    /// Obstacle count for levels 1, 2 and 3.
    pub obstacle_counts: [usize; 3],
    pub safety_margin: f64,
    /// Extra clearance kept around the start position, beyond the safety distance.
    pub start_clearance: f64,
    pub max_attempts: usize,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            bounds_min: FOREST_BOUNDS.0,
            bounds_max: FOREST_BOUNDS.1,
            track: Vec::new(),
            start: FOREST_START,
            obstacle_radius: DEFAULT_OBSTACLE_RADIUS,
            obstacle_counts: [40, 70, 120],
            safety_margin: DEFAULT_SAFETY_MARGIN,
            start_clearance: 2.0,
            max_attempts: 200_000,
        }
    }
}

impl ForestSpec {
    pub fn waypoints(&self) -> Vec<Waypoint> {
        if self.track.is_empty() {
            forest_track()
        } else {
            self.track.iter().map(|&c| Waypoint::new(c)).collect()
        }
    }
}

/// Places spherical obstacles by dart throwing with a per-level minimum
/// spacing, keeping clear of every waypoint and of the start position.
pub fn generate_forest<R: Rng + ?Sized>(
    level: ForestLevel,
    spec: &ForestSpec,
    arm_length: f64,
    rng: &mut R,
) -> Result<WorldSpec> {
    let bounds = Bounds::new(spec.bounds_min, spec.bounds_max);
    let track = spec.waypoints();
    let start = Vector3::from(spec.start);
    let r = spec.obstacle_radius;
    let d_safe = r + arm_length + spec.safety_margin;
    let target = spec.obstacle_counts[level.index()];

    // A layout whose closest pair ends up wider than the level allows is
    // redrawn, spacing included.
    let mut attempts = 0usize;
    let obstacles = loop {
        let spacing = level.sample_spacing(rng);
        let mut obstacles: Vec<Obstacle> = Vec::with_capacity(target);
        while obstacles.len() < target {
            if attempts >= spec.max_attempts {
                return Err(Error::WorldGeneration {
                    level: level.number(),
                    reason: format!(
                        "placed {} of {target} obstacles at spacing {spacing:.3} m after {attempts} attempts",
                        obstacles.len()
                    ),
                });
            }
            attempts += 1;
            let c = Vector3::new(
                rng.random_range(bounds.min.x..=bounds.max.x),
                rng.random_range(bounds.min.y..=bounds.max.y),
                rng.random_range(bounds.min.z..=bounds.max.z),
            );
            if track
                .iter()
                .any(|w| (w.center - c).norm() < d_safe + w.pass_radius)
            {
                continue;
            }
            if (start - c).norm() < d_safe + spec.start_clearance {
                continue;
            }
            if obstacles.iter().any(|o| (o.center - c).norm() < spacing) {
                continue;
            }
            obstacles.push(Obstacle { center: c, radius: r });
        }
        match level.max_spacing() {
            Some(max) if min_pair_distance(&obstacles).is_some_and(|m| m > max) => continue,
            _ => break obstacles,
        }
    };

    Ok(WorldSpec {
        track,
        obstacles,
        bounds,
        safety_margin: spec.safety_margin,
        start,
        randomized_waypoint: None,
    })
}

pub(crate) fn min_pair_distance(obstacles: &[Obstacle]) -> Option<f64> {
    let mut min: Option<f64> = None;
    for (i, a) in obstacles.iter().enumerate() {
        for b in &obstacles[i + 1..] {
            let d = (a.center - b.center).norm();
            min = Some(min.map_or(d, |m| m.min(d)));
        }
    }
    min
}

/// The bundled Split-S style course: seven waypoints with one vertically
/// stacked pair and one waypoint repositioned every episode.
pub fn split_s_world() -> WorldSpec {
    WorldSpec::from_toml(SPLIT_S_ASSET).expect("bundled split-s asset parses")
}
