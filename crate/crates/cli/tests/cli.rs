use std::process::Command;

fn goaldir() -> Command {
    Command::new(env!("CARGO_BIN_EXE_goaldir"))
}

#[test]
fn run_analyze_report_round() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "blocks = [3]\nseeds = 3\nmc_iterations = 500\nbootstrap = 1000\n").unwrap();
    let status = goaldir()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--agent", "oracle:5", "--tasks", "cognitive-effort,generate-configurations,evaluate-configuration,select-configuration"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("cognitive-effort"), "{stdout}");
    let first = std::fs::read(out.join("bundle.json")).unwrap();

    let again = goaldir().args(["analyze", "--in"]).arg(&out).output().unwrap();
    assert!(again.status.success());
    assert_eq!(std::fs::read(out.join("bundle.json")).unwrap(), first);

    std::fs::remove_file(out.join("report/gd.csv")).unwrap();
    let rep = goaldir().args(["report", "--in"]).arg(&out).output().unwrap();
    assert!(rep.status.success());
    assert!(out.join("report/gd.csv").exists());
}

#[test]
fn subtask_free_runs_skip_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let o = goaldir()
        .args(["run", "--tasks", "combined", "--blocks", "3", "--seeds", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("no GD analysis"));
    assert!(!dir.path().join("bundle.json").exists());
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "blocks = [2]\n").unwrap();
    let o = goaldir().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("block count 2"));

    let o = goaldir().args(["run", "--agent", "human"]).output().unwrap();
    assert!(!o.status.success());

    let o = goaldir().args(["report", "--in"]).arg(dir.path().join("missing")).output().unwrap();
    assert!(!o.status.success());
}
