use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saferace::world::{
    generate_forest, jitter_designated_waypoint, nearest_obstacle_distances, split_s_world, Bounds, ForestLevel,
    ForestSpec, Obstacle, WorldSpec,
};
use saferace::{QuadrotorParams, RandomizationSpec};

const ARM: f64 = 0.15;

fn brute_force(p: &Vector3<f64>, world: &WorldSpec, n: usize, far: f64) -> Vec<f64> {
    let mut d: Vec<f64> = world.obstacles.iter().map(|o| (o.center - p).norm() - o.radius).collect();
    d.sort_by(|a, b| a.total_cmp(b));
    d.resize(d.len().max(n), far);
    d.truncate(n);
    d
}

#[test]
fn nearest_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let count = rng.random_range(0..60);
        // Snap to a coarse grid every few cases so equal distances occur.
        let grid = case % 4 == 0;
        let coord = |rng: &mut ChaCha8Rng| {
            let x: f64 = rng.random_range(-10.0..10.0);
            if grid {
                x.round()
            } else {
                x
            }
        };
        let obstacles = (0..count)
            .map(|_| Obstacle {
                center: Vector3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng)),
                radius: if grid { 0.5 } else { rng.random_range(0.2..1.0) },
            })
            .collect();
        let world = WorldSpec {
            track: vec![],
            obstacles,
            bounds: Bounds::new([-10.0; 3], [10.0; 3]),
            safety_margin: 0.2,
            start: Vector3::zeros(),
            randomized_waypoint: None,
        };
        let p = Vector3::new(coord(&mut rng), coord(&mut rng), coord(&mut rng));
        let n = rng.random_range(1..8);
        assert_eq!(
            nearest_obstacle_distances(&p, &world, n, 100.0),
            brute_force(&p, &world, n, 100.0),
            "case {case}"
        );
    }
}

fn min_spacing(world: &WorldSpec) -> f64 {
    let o = &world.obstacles;
    let mut m = f64::INFINITY;
    for i in 0..o.len() {
        for j in i + 1..o.len() {
            m = m.min((o[i].center - o[j].center).norm());
        }
    }
    m
}

fn check_level(level: ForestLevel, band: (f64, f64)) {
    let spec = ForestSpec::default();
    let d_safe = spec.obstacle_radius + ARM + spec.safety_margin;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let world = generate_forest(level, &spec, ARM, &mut rng).unwrap();
        let m = min_spacing(&world);
        assert!(m >= band.0 && m <= band.1, "level {level:?} seed {seed}: spacing {m}");
        for w in &world.track {
            for o in &world.obstacles {
                assert!((w.center - o.center).norm() >= d_safe + w.pass_radius);
            }
        }
        world.validate(ARM).unwrap();
    }
}

#[test]
fn level_one_spacing() {
    check_level(ForestLevel::One, (4.5, f64::INFINITY));
}

#[test]
fn level_two_spacing() {
    check_level(ForestLevel::Two, (3.0, 5.0));
}

#[test]
fn level_three_spacing() {
    check_level(ForestLevel::Three, (1.0, 3.0));
}

#[test]
fn generation_is_byte_identical_per_seed() {
    let spec = ForestSpec::default();
    for level in [ForestLevel::One, ForestLevel::Two, ForestLevel::Three] {
        let a = generate_forest(level, &spec, ARM, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_forest(level, &spec, ARM, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.to_toml(), b.to_toml());
    }
}

#[test]
fn world_file_round_trip_is_exact() {
    let spec = ForestSpec::default();
    let world = generate_forest(ForestLevel::Three, &spec, ARM, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.toml");
    world.save(&path).unwrap();
    assert_eq!(WorldSpec::load(&path).unwrap(), world);
}

#[test]
fn split_s_moves_only_the_designated_waypoint() {
    let base = split_s_world();
    let designated = base.randomized_waypoint.unwrap();
    let spec = RandomizationSpec::default();
    let p = QuadrotorParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<WorldSpec> = (0..20)
        .map(|_| jitter_designated_waypoint(&base, &spec, p.arm_length, &mut rng))
        .collect();
    for w in &draws {
        for (i, (a, b)) in w.track.iter().zip(&base.track).enumerate() {
            if i == designated {
                assert!((a.center - b.center).amax() <= spec.waypoint_jitter);
            } else {
                assert_eq!(a, b);
            }
        }
        w.validate(p.arm_length).unwrap();
    }
    let moved = draws
        .iter()
        .filter(|w| w.track[designated].center != base.track[designated].center)
        .count();
    assert!(moved >= 15);
}
