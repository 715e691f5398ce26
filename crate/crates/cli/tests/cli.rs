use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[world]
max_episode_steps = 12
obstacle_count = [2, 3]

[ppo]
total_samples = 48
batch_size = 24
minibatches = 2
epochs = 1
num_envs = 2
checkpoint_every = 1

[eval]
episodes_per_seed = 1
seeds = [1]
"#;

fn mmdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmdr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path.display().to_string()
}

#[test]
fn help_lists_every_subcommand() {
    let out = mmdr(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    for cmd in ["train", "eval", "bench-delays", "compare", "ablation"] {
        assert!(s.contains(cmd), "{cmd} missing from help");
    }
    let eval = text(&mmdr(&["eval", "--help"]).stdout);
    for flag in ["--checkpoint", "--protocol", "--seeds", "--out", "--episodes", "--delay-range"] {
        assert!(eval.contains(flag), "{flag} missing from eval help");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mmdr(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mmdr(&["train", "--mode", "telepathy"]).status.code(), Some(1));
    assert_eq!(mmdr(&["eval", "--protocol", "nope", "--checkpoint", "x"]).status.code(), Some(1));
    assert_eq!(mmdr(&[]).status.code(), Some(1));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.ckpt");
    let out = mmdr(&["eval", "--checkpoint", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("absent.ckpt"));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_config_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[ppo]\nbogus_key = 1\n").unwrap();
    let out = mmdr(&["train", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("bogus_key"));
}

#[test]
fn bench_delays_reports_camera_interval() {
    let out = mmdr(&["bench-delays", "--duration", "120"]);
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    assert!(s.contains("depth 0.033"), "{s}");
    for mode in ["mmdr", "no_delay", "frame_extract", "fixed_delay", "interpolation", "state_only"] {
        assert!(s.contains(mode));
    }
}

#[test]
fn train_eval_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let runs = dir.path().join("runs");
    for mode in ["mmdr", "state_only"] {
        let out_dir = runs.join(mode);
        let out = mmdr(&["train", "--config", &cfg, "--mode", mode, "--seed", "3", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        for f in ["config.toml", "metrics.csv", "final.ckpt", "final.ckpt.manifest", "checkpoint_000000024.ckpt"] {
            assert!(out_dir.join(f).is_file(), "{f} not written");
        }
        let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
        assert_eq!(metrics.lines().count(), 3);
        let saved = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
        assert!(saved.contains(&format!("mode = \"{mode}\"")));
    }

    let csv = dir.path().join("eval.csv");
    let ckpt = runs.join("mmdr/final.ckpt");
    let out = mmdr(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--protocol",
        "moving_obstacles",
        "--seeds",
        "1,2",
        "--episodes",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 3);
    assert!(rows.lines().skip(1).all(|l| l.contains("moving_obstacles")));
    assert!(dir.path().join("eval.csv.summary.csv").is_file());
    assert!(text(&out.stderr).contains("fewer than 3 seeds"));

    let out = mmdr(&[
        "compare",
        "--runs",
        runs.to_str().unwrap(),
        "--protocols",
        "train_env_random_delay",
        "--episodes",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let table = text(&out.stdout);
    assert!(table.contains("protocol: train_env_random_delay"));
    assert!(table.contains("no_delay       absent"));
    assert!(table.lines().any(|l| l.starts_with("mmdr ") && !l.contains("absent")));
    assert!(table.lines().any(|l| l.starts_with("state_only ") && !l.contains("absent")));
}

#[test]
fn compare_missing_directory_fails() {
    let out = mmdr(&["compare", "--runs", "/definitely/not/here"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/definitely/not/here"));
}
