use std::process::{Command, Output};

fn distddp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distddp"))
        .args(args)
        .env("DISTDDP_WORKERS", "1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn list_and_show() {
    let o = distddp(&["list"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout)
        .lines()
        .any(|l| l == "swap24"));
    let o = distddp(&["show", "gate4"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("quadrotor"));
}

#[test]
fn validation_errors_exit_with_two() {
    assert_eq!(code(&distddp(&["validate", "swap2"])), 0);
    assert_eq!(code(&distddp(&["validate", "swap2", "model.dt=-1"])), 2);
    assert_eq!(code(&distddp(&["validate", "swap2", "no.such.key=1"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = 3").unwrap();
    assert_eq!(code(&distddp(&["validate", bad.to_str().unwrap()])), 2);
}

#[test]
fn other_errors_exit_with_three() {
    assert_eq!(
        code(&distddp(&["validate", "/nonexistent/scenario.toml"])),
        3
    );
    assert_eq!(code(&distddp(&["show", "nothing"])), 3);
    assert_eq!(code(&distddp(&["replay", "/nonexistent/run"])), 3);
}

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("swap2");
    let o = distddp(&[
        "run",
        "swap2",
        "-o",
        out.to_str().unwrap(),
        "md.iterations=5",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["agents"], 2);
    assert_eq!(summary["iterations"], 5);
    for f in [
        "trajectories.csv",
        "gains.csv",
        "residuals.csv",
        "messages.csv",
        "scenario.toml",
        "summary.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let o = distddp(&["replay", out.to_str().unwrap(), "--seeds", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert_eq!(
        code(&distddp(&[
            "replay",
            out.to_str().unwrap(),
            "--noise",
            "-1"
        ])),
        2
    );
}
