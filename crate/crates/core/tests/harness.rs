use std::path::Path;

use goaldir_core::agents::AgentSpec;
use goaldir_core::harness::{
    analyze_dir, cells, read_bundle, report, run_matrix, write_bundle, AnalyzeOptions, HarnessError, RunConfig, Seeds,
    REPORT_FILES,
};
use goaldir_core::stats::mean;
use goaldir_core::tasks::TaskId;

fn small(out: &Path, tasks: Vec<TaskId>) -> RunConfig {
    RunConfig {
        tasks,
        blocks: vec![3, 4],
        seeds: Seeds::Count(4),
        agent: AgentSpec::noisy(2.0),
        mc_iterations: 1000,
        bootstrap: 1000,
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn combined_with_subtasks() -> Vec<TaskId> {
    let mut t = vec![TaskId::Combined];
    t.extend(TaskId::Combined.required_subtasks());
    t
}

#[test]
fn cells_cover_the_matrix_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path(), vec![TaskId::Combined, TaskId::FallingTower, TaskId::Combined]);
    cfg.seeds = Seeds::List(vec![3, 1, 3]);
    let c = cells(&cfg);
    // Falling tower runs at its own block count only.
    assert_eq!(c.len(), 2 * 2 + 2);
    assert!(c.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn rerunning_skips_completed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), combined_with_subtasks());
    let first = run_matrix(&cfg).unwrap();
    assert_eq!(first.skipped, 0);
    assert_eq!(first.executed, cells(&cfg).len());
    let second = run_matrix(&cfg).unwrap();
    assert_eq!(second.executed, 0);
    assert_eq!(second.skipped, first.executed);
}

#[test]
fn different_episode_settings_cannot_share_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    run_matrix(&small(dir.path(), vec![TaskId::CognitiveEffort])).unwrap();
    let mut other = small(dir.path(), vec![TaskId::CognitiveEffort]);
    other.agent = AgentSpec::Random;
    assert!(matches!(run_matrix(&other), Err(HarnessError::ConfigMismatch(_))));
    // Analysis-only settings may change.
    let mut more = small(dir.path(), vec![TaskId::CognitiveEffort]);
    more.mc_iterations = 2000;
    assert!(run_matrix(&more).is_ok());
}

#[test]
fn analysis_needs_every_cell_and_every_subtask() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), vec![TaskId::Combined]);
    run_matrix(&cfg).unwrap();
    let err = analyze_dir(dir.path(), &AnalyzeOptions::default()).unwrap_err();
    assert!(matches!(err, HarnessError::MissingSubtask { .. }), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), combined_with_subtasks());
    run_matrix(&cfg).unwrap();
    let victim = dir.path().join("runs/noisy-l2/neutral/records/combined_4b_2.json");
    std::fs::remove_file(&victim).unwrap();
    match analyze_dir(dir.path(), &AnalyzeOptions::default()) {
        Err(HarnessError::Incomplete { missing, .. }) => assert_eq!(missing, 1),
        other => panic!("expected an incomplete-matrix error, got {other:?}"),
    }
}

#[test]
fn report_tables_match_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), combined_with_subtasks());
    run_matrix(&cfg).unwrap();
    let bundle = analyze_dir(dir.path(), &AnalyzeOptions::default()).unwrap();
    write_bundle(&bundle, dir.path()).unwrap();
    assert_eq!(read_bundle(dir.path()).unwrap(), bundle);
    let files = report(&bundle, dir.path()).unwrap();
    assert_eq!(files.len(), REPORT_FILES.len());

    let gd = std::fs::read_to_string(dir.path().join("report/gd.csv")).unwrap();
    let rows: Vec<&str> = gd.lines().collect();
    assert_eq!(rows[0], "task,n_blocks,gd,ci_low,ci_high,n_runs,n_excluded");
    // One row per block count plus the aggregate, for the one GD task.
    assert_eq!(rows.len(), 1 + 3);
    assert!(rows[3].starts_with("combined,all,"));

    // Regret is the simulated optimum minus the achieved mean.
    for r in &bundle.regrets {
        let s = &bundle.samples[&r.task][&r.n_blocks];
        assert!((r.optimum_mean - mean(&s.r_star)).abs() < 1e-12);
        assert!((r.achieved_mean - mean(&s.r_pi)).abs() < 1e-12);
        assert!((r.regret - (r.optimum_mean - r.achieved_mean)).abs() < 1e-12);
    }
    let plot: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report/plot.json")).unwrap()).unwrap();
    assert_eq!(plot["gd"][0]["x"].as_array().unwrap().len(), 3);
}

#[test]
fn tables_without_gd_tasks_still_have_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path(), vec![TaskId::HeightEstimation]);
    run_matrix(&cfg).unwrap();
    let bundle = analyze_dir(dir.path(), &AnalyzeOptions::default()).unwrap();
    assert!(bundle.results.is_empty());
    report(&bundle, dir.path()).unwrap();
    for f in ["gd.csv", "regret.csv"] {
        let text = std::fs::read_to_string(dir.path().join("report").join(f)).unwrap();
        assert_eq!(text.lines().count(), 1, "{f}");
    }
    let caps = std::fs::read_to_string(dir.path().join("report/capabilities.csv")).unwrap();
    assert!(caps.contains("estimation-error"));
}

#[test]
fn worker_count_and_mode_do_not_change_results() {
    let run = |workers, exec| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { workers, exec, ..small(dir.path(), combined_with_subtasks()) };
        run_matrix(&cfg).unwrap();
        let b = analyze_dir(dir.path(), &AnalyzeOptions::default()).unwrap();
        serde_json::to_string(&b).unwrap()
    };
    use goaldir_core::exec::ExecMode;
    assert_eq!(run(Some(1), ExecMode::Sequential), run(Some(3), ExecMode::Parallel));
}

#[test]
fn stepping_controls_report_both_regrets() {
    let dir = tempfile::tempdir().unwrap();
    let mut tasks = combined_with_subtasks();
    tasks.push(TaskId::SteppedCombined);
    run_matrix(&small(dir.path(), tasks)).unwrap();
    let bundle = analyze_dir(dir.path(), &AnalyzeOptions::default()).unwrap();
    assert_eq!(bundle.aux.stepping.len(), 2);
    assert!(bundle.aux.stepping.iter().all(|s| s.composite_regret.is_some()));
}
