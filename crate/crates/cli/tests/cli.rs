use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn echo(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echo"))
        .args(args)
        .current_dir(cwd)
        .env_remove("LM_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = echo(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_is_deterministic_and_guards_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--count", "10", "--out", "a"], d);
    ok(&["gen", "--count", "10", "--out", "b"], d);
    let files: Vec<_> = fs::read_dir(d.join("a")).unwrap().collect();
    assert_eq!(files.len(), 11);
    for seed in 0..10 {
        let name = format!("world_{seed}.json");
        assert_eq!(fs::read(d.join("a").join(&name)).unwrap(), fs::read(d.join("b").join(&name)).unwrap());
    }
    assert_eq!(echo(&["gen", "--count", "10", "--out", "a"], d).status.code(), Some(1));
    ok(&["gen", "--count", "2", "--out", "a", "--force"], d);
    assert_eq!(echo(&["gen", "--count", "0", "--out", "c"], d).status.code(), Some(2));
    ok(&["gen", "--seeds", "3,7", "--out", "s"], d);
    assert!(d.join("s/world_7.json").exists());
}

#[test]
fn run_eval_validate_replay_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--count", "3", "--out", "envs"], d);
    let run = |strategy: &str, backend: &str, out: &str| {
        ok(&["run", "--envs", "envs", "--strategy", strategy, "--backend", backend, "--episodes", "6", "--out", out], d)
    };
    run("react", "scripted:turn-left", "left");
    let metrics = fs::read_to_string(d.join("left/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("env_seed,episode,goal,reward,steps,cum_avg_reward,strategy"));
    assert!(lines.all(|l| l.contains(",0.0,64,0.0,react")));

    run("echo", "scripted:bfs-demo", "echo");
    run("react", "scripted:bfs-demo", "react");
    for f in ["config.json", "trajectories.jsonl", "metrics.csv", "updates.jsonl", "memory/0/5.json"] {
        assert!(d.join("echo").join(f).exists(), "{f}");
    }

    ok(&["run", "--resume-config", "echo/config.json", "--out", "echo2"], d);
    for f in ["trajectories.jsonl", "metrics.csv"] {
        assert_eq!(fs::read(d.join("echo").join(f)).unwrap(), fs::read(d.join("echo2").join(f)).unwrap(), "{f}");
    }

    ok(&["eval", "--runs", "react", "--baseline", "react", "--out", "same.csv", "--plot", "same.svg"], d);
    let same = fs::read_to_string(d.join("same.csv")).unwrap();
    assert_eq!(same.lines().count(), 1 + 3 * 6);
    assert!(same.lines().skip(1).all(|l| l.ends_with(",0.0")));
    assert!(fs::read_to_string(d.join("same.svg")).unwrap().contains("<polyline"));

    let v = ok(&["validate", "--run", "echo", "--samples", "5"], d);
    assert_eq!(stdout(&v).lines().next(), Some("5/5 (100%)"));
    let v = ok(&["validate", "--run", "left"], d);
    assert!(stdout(&v).contains("nothing to validate"));
    assert_eq!(echo(&["validate", "--run", "echo", "--samples", "0"], d).status.code(), Some(2));
    assert_eq!(echo(&["validate", "--run", "envs"], d).status.code(), Some(1));

    let oracle = ok(
        &[
            "run",
            "--envs",
            "envs",
            "--strategy",
            "react",
            "--backend",
            "scripted:oracle",
            "--episodes",
            "2",
            "--out",
            "oracle",
        ],
        d,
    );
    assert!(oracle.status.success());
    let r = ok(&["replay", "--trajectory", "oracle/trajectories.jsonl", "--index", "0"], d);
    let text = stdout(&r);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.last(), Some(&"success"));
    assert!(lines.iter().rev().find(|l| l.trim_start().starts_with("action:")).unwrap().contains("(pick up)"));
    assert_eq!(
        echo(&["replay", "--trajectory", "oracle/trajectories.jsonl", "--index", "0", "--step", "999"], d)
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn eval_rejects_unpaired_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--count", "2", "--out", "envs"], d);
    let base = ["run", "--envs", "envs", "--strategy", "react", "--backend", "scripted:turn-left", "--episodes", "3"];
    ok(&[&base[..], &["--out", "a"]].concat(), d);
    ok(&[&base[..], &["--goal-seed", "5", "--out", "b"]].concat(), d);
    let out = echo(&["eval", "--runs", "b", "--baseline", "a", "--out", "x.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not paired"));
}

#[test]
fn configuration_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen", "--count", "1", "--out", "envs"], d);
    let live = echo(&["run", "--envs", "envs", "--strategy", "echo", "--backend", "live", "--out", "live"], d);
    assert_eq!(live.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&live.stderr).contains("LM_API_KEY"));
    assert!(!d.join("live").exists());
    let bad = echo(&["run", "--envs", "envs", "--strategy", "nope", "--backend", "live", "--out", "x"], d);
    assert_eq!(bad.status.code(), Some(2));
    let bad = echo(&["run", "--envs", "envs", "--strategy", "echo", "--backend", "scripted:nope", "--out", "x"], d);
    assert_eq!(bad.status.code(), Some(2));
    let mut snapshot = fs::read_to_string(d.join("envs/world_0.json")).unwrap();
    snapshot = snapshot.replacen("\"seed\": 0", "\"seed\": 1", 1);
    fs::write(d.join("envs/world_0.json"), snapshot).unwrap();
    let tampered =
        echo(&["run", "--envs", "envs", "--strategy", "react", "--backend", "scripted:oracle", "--out", "t"], d);
    assert_eq!(tampered.status.code(), Some(1));
}
