//! CSV tables and plot data from a results bundle.

use std::path::{Path, PathBuf};

use serde_json::json;

use super::{write_atomic, HarnessError, Layout, ResultsBundle};
use crate::stats::mean;

pub const REPORT_FILES: [&str; 5] = ["gd.csv", "regret.csv", "capabilities.csv", "aux.csv", "plot.json"];

const GD_HEADER: [&str; 7] = ["task", "n_blocks", "gd", "ci_low", "ci_high", "n_runs", "n_excluded"];
const REGRET_HEADER: [&str; 7] =
    ["task", "n_blocks", "optimum_mean", "achieved_mean", "baseline_mean", "regret", "n_runs"];
const CAPABILITY_HEADER: [&str; 6] = ["n_blocks", "kind", "samples", "mean", "sd", "median"];
const AUX_HEADER: [&str; 5] = ["section", "task", "n_blocks", "metric", "value"];

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn summary(xs: &[f64]) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) { (sorted[k - 1] + sorted[k]) / 2.0 } else { sorted[k] };
    (m, sd, median)
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn gd_rows(b: &ResultsBundle) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (task, result) in &b.results {
        let counts: Vec<_> = b.cells.iter().filter(|c| c.task == *task).collect();
        for &n in &b.blocks {
            let cell = counts.iter().find(|c| c.n_blocks == n);
            let gd = result.estimate.as_ref().and_then(|e| e.per_stratum.get(&n).copied());
            let ci = result.strata_ci.get(&n);
            rows.push(vec![
                task.to_string(),
                n.to_string(),
                opt(gd),
                opt(ci.map(|c| c.0)),
                opt(ci.map(|c| c.1)),
                cell.map(|c| c.n_runs.to_string()).unwrap_or_default(),
                cell.map(|c| c.n_excluded.to_string()).unwrap_or_default(),
            ]);
        }
        let e = result.estimate.as_ref();
        rows.push(vec![
            task.to_string(),
            "all".into(),
            opt(e.map(|e| e.aggregate)),
            opt(e.map(|e| e.ci_low)),
            opt(e.map(|e| e.ci_high)),
            counts.iter().map(|c| c.n_runs).sum::<usize>().to_string(),
            counts.iter().map(|c| c.n_excluded).sum::<usize>().to_string(),
        ]);
    }
    rows
}

fn regret_rows(b: &ResultsBundle) -> Vec<Vec<String>> {
    b.regrets
        .iter()
        .map(|r| {
            vec![
                r.task.to_string(),
                r.n_blocks.to_string(),
                num(r.optimum_mean),
                num(r.achieved_mean),
                num(r.baseline_mean),
                num(r.regret),
                r.n_runs.to_string(),
            ]
        })
        .collect()
}

fn capability_rows(b: &ResultsBundle) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (n, p) in &b.profiles {
        let sets: [(&str, Vec<f64>); 5] = [
            ("estimation-error", p.estimation_errors.clone()),
            ("configuration-count", p.config_counts.iter().map(|&m| m as f64).collect()),
            ("evaluation-error", p.evaluation_errors.clone()),
            ("selection-distance", p.selection_distances.iter().map(|&d| d as f64).collect()),
            ("execution-distance", p.execution_distances.iter().map(|&d| d as f64).collect()),
        ];
        for (kind, xs) in sets {
            let (m, sd, med) = summary(&xs);
            rows.push(vec![n.to_string(), kind.into(), xs.len().to_string(), num(m), num(sd), num(med)]);
        }
    }
    rows
}

fn aux_rows(b: &ResultsBundle) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut push = |section: &str, task: String, n: String, metric: &str, value: String| {
        rows.push(vec![section.into(), task, n, metric.into(), value]);
    };
    for m in &b.aux.measurements {
        let (t, n) = (m.task.to_string(), m.n_blocks.to_string());
        push("measurements", t.clone(), n.clone(), "runs", m.runs.to_string());
        push("measurements", t.clone(), n.clone(), "mean_per_block", num(m.mean_per_block));
        push("measurements", t, n, "median_per_block", num(m.median_per_block));
    }
    if let Some(f) = &b.aux.falling {
        let t = crate::tasks::TaskId::FallingTower.to_string();
        let n = crate::tasks::FALLING_TOWER_BLOCKS.to_string();
        push("falling-tower", t.clone(), n.clone(), "runs", f.runs.to_string());
        push("falling-tower", t.clone(), n.clone(), "mean_final_height", num(f.mean_final_height));
        push("falling-tower", t.clone(), n.clone(), "median_final_height", num(f.median_final_height));
        push("falling-tower", t.clone(), n.clone(), "mean_rebuilds", num(f.mean_rebuilds));
        push("falling-tower", t.clone(), n.clone(), "median_rebuilds", num(f.median_rebuilds));
        push("falling-tower", t, n, "mean_collapses", num(f.mean_collapses));
    }
    for s in &b.aux.stepping {
        let (t, n) = (s.task.to_string(), s.n_blocks.to_string());
        push("stepping", t.clone(), n.clone(), "stepped_regret", num(s.stepped_regret));
        push("stepping", t, n, &format!("{}_regret", s.counterpart), opt(s.composite_regret));
    }
    for e in &b.exclusions {
        push("exclusions", e.task.to_string(), e.n_blocks.to_string(), &format!("seed_{}", e.seed), e.status.clone());
    }
    rows
}

fn plot_data(b: &ResultsBundle) -> serde_json::Value {
    let gd: Vec<_> = b
        .results
        .iter()
        .map(|(task, r)| {
            let mut x: Vec<String> = b.blocks.iter().map(|n| n.to_string()).collect();
            x.push("all".into());
            let est = r.estimate.as_ref();
            let mut y: Vec<Option<f64>> =
                b.blocks.iter().map(|n| est.and_then(|e| e.per_stratum.get(n).copied())).collect();
            y.push(est.map(|e| e.aggregate));
            let mut low: Vec<Option<f64>> = b.blocks.iter().map(|n| r.strata_ci.get(n).map(|c| c.0)).collect();
            low.push(est.map(|e| e.ci_low));
            let mut high: Vec<Option<f64>> = b.blocks.iter().map(|n| r.strata_ci.get(n).map(|c| c.1)).collect();
            high.push(est.map(|e| e.ci_high));
            json!({ "task": task, "x": x, "y": y, "ci_low": low, "ci_high": high })
        })
        .collect();
    let regret: Vec<_> = b
        .results
        .keys()
        .map(|task| {
            let rows: Vec<_> = b.regrets.iter().filter(|r| r.task == *task).collect();
            json!({
                "task": task,
                "x": rows.iter().map(|r| r.n_blocks).collect::<Vec<_>>(),
                "y": rows.iter().map(|r| r.regret).collect::<Vec<_>>(),
            })
        })
        .collect();
    let measurements: Vec<_> = b
        .aux
        .measurements
        .iter()
        .map(|m| json!({ "task": m.task, "n_blocks": m.n_blocks, "mean": m.mean_per_block, "median": m.median_per_block }))
        .collect();
    json!({
        "agent": b.agent,
        "prompt": b.prompt,
        "gd": gd,
        "regret": regret,
        "measurements_per_block": measurements,
        "falling_tower": b.aux.falling,
    })
}

/// Writes the report tables into `dir/report/`; returns the file paths.
pub fn report(bundle: &ResultsBundle, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let out = Layout::new(dir).report_dir();
    let paths: Vec<PathBuf> = REPORT_FILES.iter().map(|f| out.join(f)).collect();
    write_csv(&paths[0], &GD_HEADER, gd_rows(bundle))?;
    write_csv(&paths[1], &REGRET_HEADER, regret_rows(bundle))?;
    write_csv(&paths[2], &CAPABILITY_HEADER, capability_rows(bundle))?;
    write_csv(&paths[3], &AUX_HEADER, aux_rows(bundle))?;
    let plot = serde_json::to_vec_pretty(&plot_data(bundle)).expect("serializable plot data");
    write_atomic(&paths[4], &plot)?;
    Ok(paths)
}

pub fn write_bundle(bundle: &ResultsBundle, dir: &Path) -> Result<PathBuf, HarnessError> {
    let path = Layout::new(dir).bundle_path();
    write_atomic(&path, &serde_json::to_vec(bundle).expect("serializable bundle"))?;
    Ok(path)
}

pub fn read_bundle(dir: &Path) -> Result<ResultsBundle, HarnessError> {
    let path = Layout::new(dir).bundle_path();
    let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| HarnessError::Json { path, source })
}
