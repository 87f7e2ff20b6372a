use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
scenario = "split_s_obstacles"
seed = 5
eval_trajectories = 6
checkpoint_interval = 4

[env]
lambda1 = 1.0
lambda2 = 0.01
lambda3 = -0.05
lambda4 = -1.0
r_collision = -30.0
max_episode_time = 3.0

[ppo]
total_env_steps = 10000
num_envs = 10
rollout_horizon = 100
minibatch_size = 250
epochs_per_update = 2
hidden_sizes = [16, 16]
"#;

fn saferace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saferace")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(saferace(&["fly"]).status.code(), Some(1));
    assert_eq!(saferace(&["evaluate"]).status.code(), Some(1));
    assert_eq!(saferace(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_lambda3_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("lambda3 = -0.05\n", ""));
    let out = saferace(&["train", "--config", &cfg, "--out", dir.path().join("run").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("lambda3"), "{}", stderr(&out));
}

#[test]
fn unknown_ablation_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = saferace(&["ablate", "--config", &cfg, "--ablation", "no_progress"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let missing = dir.path().join("nope.bin");
    let out = saferace(&["evaluate", "--config", &cfg, "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn tiny_training_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = saferace(&["train", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        out_dir
    };
    let a = run("a");
    let b = run("b");
    assert!(a.join("checkpoint.bin").exists());
    assert!(a.join("config.toml").exists());
    let log_a = std::fs::read_to_string(a.join("training_log.csv")).unwrap();
    assert_eq!(log_a.lines().count(), 1 + 10);
    assert_eq!(log_a, std::fs::read_to_string(b.join("training_log.csv")).unwrap());

    let ckpt = a.join("checkpoint.bin");
    let ckpt = ckpt.to_str().unwrap();
    let eval = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = saferace(&["evaluate", "--config", &cfg, "--checkpoint", ckpt, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert!(stdout(&out).contains("crash ratio"));
        out_dir
    };
    let e1 = eval("e1");
    let e2 = eval("e2");
    for file in ["report.toml", "trajectories.csv"] {
        assert_eq!(
            std::fs::read(e1.join(file)).unwrap(),
            std::fs::read(e2.join(file)).unwrap()
        );
    }
    assert_eq!(
        std::fs::read_to_string(e1.join("trajectories.csv")).unwrap().lines().count(),
        1 + 6
    );

    // Continuing a finished run adds no updates.
    let out = saferace(&["train", "--config", &cfg, "--out", a.to_str().unwrap(), "--resume"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(a.join("training_log.csv")).unwrap(), log_a);

    let world = dir.path().join("w.toml");
    let out = saferace(&["gen-world", "--level", "1", "--seed", "3", "--out", world.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = dir.path().join("r.csv");
    let out = saferace(&[
        "rollout", "--config", &cfg, "--checkpoint", ckpt, "--world", world.to_str().unwrap(), "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let steps: usize = stdout(&out).split_whitespace().next().unwrap().parse().unwrap();
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), steps + 1);
}

#[test]
fn gen_world_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let out = saferace(&["gen-world", "--level", "2", "--seed", seed, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        (std::fs::read(&path).unwrap(), stdout(&out))
    };
    let (a, msg) = gen("a.toml", "42");
    let (b, _) = gen("b.toml", "42");
    let (c, _) = gen("c.toml", "43");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(msg.starts_with("obstacles: 70, minimum spacing: "), "{msg}");
    let spacing: f64 = msg.trim().trim_end_matches(" m").rsplit(' ').next().unwrap().parse().unwrap();
    assert!((3.0..=5.0).contains(&spacing));

    assert_eq!(saferace(&["gen-world", "--level", "7"]).status.code(), Some(1));
}
