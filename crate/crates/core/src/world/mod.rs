//! Track and obstacle model.
//!
//! A [`WorldSpec`] is immutable once built and is shared by every
//! environment that flies in it. Obstacles are spheres; collision uses the
//! inflated distance `d_safe = r + arm_length + safety_margin`.

mod generate;
pub(crate) use generate::min_pair_distance;
mod randomize;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{
    forest_track, generate_forest, split_s_world, ForestLevel, ForestSpec, FOREST_BOUNDS,
    FOREST_START,
};
pub use randomize::{
    jitter_designated_waypoint, randomize_initial_state, randomize_params, RandomizationSpec,
};

/// Padding distance reported when fewer than N obstacles exist.
pub const FAR_DISTANCE: f64 = 100.0;
pub const DEFAULT_PASS_RADIUS: f64 = 0.5;
pub const DEFAULT_SAFETY_MARGIN: f64 = 0.2;
pub const DEFAULT_OBSTACLE_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub center: Vector3<f64>,
    pub pass_radius: f64,
}

impl Waypoint {
    pub fn new(center: [f64; 3]) -> Self {
        Self {
            center: Vector3::from(center),
            pass_radius: DEFAULT_PASS_RADIUS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Bounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self {
            min: Vector3::from(min),
            max: Vector3::from(max),
        }
    }

    /// Closed box test.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    fn strictly_contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CollisionStatus {
    Free,
    ObstacleHit,
    OutOfBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub track: Vec<Waypoint>,
    pub obstacles: Vec<Obstacle>,
    pub bounds: Bounds,
    pub safety_margin: f64,
    /// Nominal start position of the vehicle.
    pub start: Vector3<f64>,
    /// Index of the waypoint repositioned on every reset, if any.
    pub randomized_waypoint: Option<usize>,
}

impl WorldSpec {
    pub fn safe_distance(&self, obstacle: &Obstacle, arm_length: f64) -> f64 {
        obstacle.radius + arm_length + self.safety_margin
    }

    /// Checks the structural invariants: a non-empty track inside the bounds,
    /// positive radii, and every waypoint reachable without entering an
    /// obstacle's safety distance.
    pub fn validate(&self, arm_length: f64) -> Result<()> {
        let b = &self.bounds;
        if !(0..3).all(|i| b.min[i] < b.max[i]) {
            return Err(Error::config("bounds", "min must be < max componentwise"));
        }
        if self.track.is_empty() {
            return Err(Error::config("track", "must contain at least one waypoint"));
        }
        if !(self.safety_margin >= 0.0) {
            return Err(Error::config("safety_margin", "must be >= 0"));
        }
        if !b.strictly_contains(&self.start) {
            return Err(Error::config("start", "must lie strictly inside bounds"));
        }
        if let Some(idx) = self.randomized_waypoint {
            if idx >= self.track.len() {
                return Err(Error::config("randomized_waypoint", "index outside track"));
            }
        }
        for (i, w) in self.track.iter().enumerate() {
            if !(w.pass_radius > 0.0) {
                return Err(Error::config("track", format!("waypoint {i}: pass_radius must be > 0")));
            }
            if !b.strictly_contains(&w.center) {
                return Err(Error::config("track", format!("waypoint {i} lies outside bounds")));
            }
            for o in &self.obstacles {
                if (w.center - o.center).norm() < self.safe_distance(o, arm_length) {
                    return Err(Error::config(
                        "obstacles",
                        format!("waypoint {i} lies within the safety distance of an obstacle"),
                    ));
                }
            }
        }
        if let Some(o) = self.obstacles.iter().find(|o| !(o.radius > 0.0)) {
            return Err(Error::config(
                "obstacles",
                format!("radius must be > 0, got {}", o.radius),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&WorldFile::from(self)).expect("world file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: WorldFile =
            toml::from_str(text).map_err(|e| Error::config("world", e.message().to_string()))?;
        Ok(file.into())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// Surface distances (center distance minus radius) to the `n` nearest
/// obstacles, ascending, padded with `far` when fewer obstacles exist.
pub fn nearest_obstacle_distances(p: &Vector3<f64>, world: &WorldSpec, n: usize, far: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    nearest_obstacle_distances_into(p, &world.obstacles, n, far, &mut out);
    out
}

pub(crate) fn nearest_obstacle_distances_into(
    p: &Vector3<f64>,
    obstacles: &[Obstacle],
    n: usize,
    far: f64,
    out: &mut Vec<f64>,
) {
    debug_assert!(n >= 1);
    out.clear();
    // Insertion into a bounded sorted list; n is small.
    for o in obstacles {
        let d = (p - o.center).norm() - o.radius;
        if out.len() == n && d >= out[n - 1] {
            continue;
        }
        let at = out.partition_point(|x| *x <= d);
        if out.len() == n {
            out.pop();
        }
        out.insert(at, d);
    }
    out.resize(n, far);
}

pub fn check_collision(p: &Vector3<f64>, world: &WorldSpec, arm_length: f64) -> CollisionStatus {
    let hit = world
        .obstacles
        .iter()
        .any(|o| (p - o.center).norm() < world.safe_distance(o, arm_length));
    if hit {
        CollisionStatus::ObstacleHit
    } else if !world.bounds.contains(p) {
        CollisionStatus::OutOfBounds
    } else {
        CollisionStatus::Free
    }
}

pub fn waypoint_passed(p: &Vector3<f64>, waypoint: &Waypoint) -> bool {
    (p - waypoint.center).norm() <= waypoint.pass_radius
}

/// On-disk layout of a world.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    safety_margin: f64,
    start: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    randomized_waypoint: Option<usize>,
    /// Each entry is [x, y, z, radius].
    #[serde(default)]
    obstacles: Vec<[f64; 4]>,
    bounds: BoundsFile,
    track: Vec<TrackEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsFile {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackEntry {
    position: [f64; 3],
    #[serde(default = "default_pass_radius")]
    pass_radius: f64,
}

fn default_pass_radius() -> f64 {
    DEFAULT_PASS_RADIUS
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl From<&WorldSpec> for WorldFile {
    fn from(w: &WorldSpec) -> Self {
        Self {
            safety_margin: w.safety_margin,
            start: arr(&w.start),
            randomized_waypoint: w.randomized_waypoint,
            bounds: BoundsFile {
                min: arr(&w.bounds.min),
                max: arr(&w.bounds.max),
            },
            track: w
                .track
                .iter()
                .map(|t| TrackEntry {
                    position: arr(&t.center),
                    pass_radius: t.pass_radius,
                })
                .collect(),
            obstacles: w
                .obstacles
                .iter()
                .map(|o| [o.center.x, o.center.y, o.center.z, o.radius])
                .collect(),
        }
    }
}

impl From<WorldFile> for WorldSpec {
    fn from(f: WorldFile) -> Self {
        Self {
            track: f
                .track
                .into_iter()
                .map(|t| Waypoint {
                    center: Vector3::from(t.position),
                    pass_radius: t.pass_radius,
                })
                .collect(),
            obstacles: f
                .obstacles
                .into_iter()
                .map(|[x, y, z, r]| Obstacle {
                    center: Vector3::new(x, y, z),
                    radius: r,
                })
                .collect(),
            bounds: Bounds::new(f.bounds.min, f.bounds.max),
            safety_margin: f.safety_margin,
            start: Vector3::from(f.start),
            randomized_waypoint: f.randomized_waypoint,
        }
    }
}
