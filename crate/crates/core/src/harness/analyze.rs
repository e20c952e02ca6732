//! From persisted records to GD estimates, regrets and auxiliary metrics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::run::cells;
use super::{HarnessError, Layout, RunConfig};
use crate::exec::ExecMode;
use crate::mc::{simulate, CapabilityProfile, McOptions, ObservedRun, ReturnSamples};
use crate::rng::{derive_seed, label_hash};
use crate::stats::{bootstrap_ci, estimate_gd, mean, BootstrapOptions, GDEstimate};
use crate::tasks::{PromptVariant, RunRecord, StatKind, TaskId};

/// Overrides for the analysis settings stored in the run config.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AnalyzeOptions {
    pub mc_iterations: Option<usize>,
    pub bootstrap: Option<usize>,
    pub exec: Option<ExecMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCount {
    pub task: TaskId,
    pub n_blocks: usize,
    pub agent: String,
    pub seeds: usize,
    pub n_runs: usize,
    pub n_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub task: TaskId,
    pub n_blocks: usize,
    pub seed: u64,
    pub agent: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: TaskId,
    pub estimate: Option<GDEstimate>,
    /// Single-stratum 95% intervals.
    pub strata_ci: BTreeMap<usize, (f64, f64)>,
    /// Why a stratum or the whole task has no estimate.
    pub errors: Vec<String>,
    /// SHA-256 of the records this result was computed from.
    pub input_hash: String,
    pub m_clamped: u64,
    pub shell_clamped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub task: TaskId,
    pub n_blocks: usize,
    pub optimum_mean: f64,
    pub achieved_mean: f64,
    pub baseline_mean: f64,
    /// optimum_mean − achieved_mean.
    pub regret: f64,
    pub n_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub task: TaskId,
    pub n_blocks: usize,
    pub runs: usize,
    pub mean_per_block: f64,
    pub median_per_block: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FallingRow {
    pub runs: usize,
    pub mean_final_height: f64,
    pub median_final_height: f64,
    pub mean_rebuilds: f64,
    pub median_rebuilds: f64,
    pub mean_collapses: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteppingRow {
    pub task: TaskId,
    pub counterpart: TaskId,
    pub n_blocks: usize,
    pub stepped_regret: f64,
    pub composite_regret: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aux {
    pub measurements: Vec<MeasurementRow>,
    pub falling: Option<FallingRow>,
    pub stepping: Vec<SteppingRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub agent: String,
    pub capability_agent: String,
    pub prompt: PromptVariant,
    pub mc_iterations: usize,
    pub bootstrap: usize,
    pub analysis_seed: u64,
    pub blocks: Vec<usize>,
    /// SHA-256 over all records, in cell order.
    pub input_hash: String,
    pub records: Vec<RunRecord>,
    pub profiles: BTreeMap<usize, CapabilityProfile>,
    pub samples: BTreeMap<TaskId, BTreeMap<usize, ReturnSamples>>,
    pub results: BTreeMap<TaskId, TaskResult>,
    pub cells: Vec<CellCount>,
    pub exclusions: Vec<Exclusion>,
    pub regrets: Vec<RegretRow>,
    pub aux: Aux,
}

impl ResultsBundle {
    pub fn gd(&self, task: TaskId) -> Option<&GDEstimate> {
        self.results.get(&task).and_then(|r| r.estimate.as_ref())
    }

    /// Tasks with a GD row, in task order.
    pub fn gd_tasks(&self) -> Vec<TaskId> {
        self.results.keys().copied().collect()
    }
}

pub fn records_hash<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("serializable record"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Every configured cell's record. Missing cells are an error.
pub fn load_records(cfg: &RunConfig, layout: &Layout) -> Result<Vec<RunRecord>, HarnessError> {
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for c in cells(cfg) {
        let path = layout.record_path(cfg.agent_for(c.task), cfg.prompt, c.task, c.n_blocks, c.seed);
        match std::fs::read(&path) {
            Ok(bytes) => records.push(
                serde_json::from_slice(&bytes).map_err(|source| HarnessError::Json { path: path.clone(), source })?,
            ),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => missing.push(path),
            Err(e) => return Err(HarnessError::io(&path, e)),
        }
    }
    if let Some(first) = missing.first() {
        return Err(HarnessError::Incomplete { missing: missing.len(), first: first.display().to_string() });
    }
    Ok(records)
}

/// Loads `dir/config.json` and the records it names, then analyzes them.
pub fn analyze_dir(dir: &Path, opts: &AnalyzeOptions) -> Result<ResultsBundle, HarnessError> {
    let layout = Layout::new(dir);
    let path = layout.config_path();
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut cfg: RunConfig =
        serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.clone(), source })?;
    if let Some(n) = opts.mc_iterations {
        cfg.mc_iterations = n;
    }
    if let Some(b) = opts.bootstrap {
        cfg.bootstrap = b;
    }
    if let Some(m) = opts.exec {
        cfg.exec = m;
    }
    cfg.validate()?;
    let records = load_records(&cfg, &layout)?;
    analyze_records(&cfg, records)
}

fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len().is_multiple_of(2) {
        (xs[m - 1] + xs[m]) / 2.0
    } else {
        xs[m]
    }
}

fn measures(task: TaskId) -> bool {
    matches!(
        task,
        TaskId::InformationGathering
            | TaskId::Combined
            | TaskId::HeightEstimation
            | TaskId::SteppedInformationGathering
            | TaskId::SteppedCombined
    )
}

/// GD-bearing tasks: composites and stepping controls.
fn has_gd(task: TaskId) -> bool {
    task.is_composite() || task.is_stepped()
}

/// Runs the Monte Carlo estimators and the bootstrap on a record set.
pub fn analyze_records(cfg: &RunConfig, mut records: Vec<RunRecord>) -> Result<ResultsBundle, HarnessError> {
    cfg.validate()?;
    records.sort_by(|a, b| {
        (a.task, a.n_blocks, a.seed, &a.agent).cmp(&(b.task, b.n_blocks, b.seed, &b.agent))
    });
    for &task in cfg.tasks.iter().filter(|t| has_gd(**t)) {
        for &subtask in task.required_subtasks() {
            if !cfg.tasks.contains(&subtask) {
                return Err(HarnessError::MissingSubtask { task, subtask, n_blocks: cfg.blocks[0] });
            }
        }
    }
    let agent_id = cfg.agent.id();
    let cap_id = cfg.capability_agent().id();
    let of = |task: TaskId, n: usize| {
        let id = if task.is_subtask() { &cap_id } else { &agent_id };
        records.iter().filter(move |r| r.task == task && r.n_blocks == n && &r.agent == id)
    };

    let profiles: BTreeMap<usize, CapabilityProfile> = cfg
        .blocks
        .iter()
        .map(|&n| {
            let subtask_records = TaskId::SUBTASKS.iter().flat_map(|&t| of(t, n));
            (n, CapabilityProfile::from_records(n, subtask_records))
        })
        .collect();

    let mc_opts = |seed| McOptions { iterations: cfg.mc_iterations, seed, mode: cfg.exec };
    let boot_opts = |seed| BootstrapOptions { replicates: cfg.bootstrap, alpha: 0.05, seed, mode: cfg.exec };
    let mut samples = BTreeMap::new();
    let mut results = BTreeMap::new();
    let mut regrets = Vec::new();
    for &task in cfg.tasks.iter().filter(|t| has_gd(**t)) {
        let salt = label_hash(task.name());
        let mut strata = BTreeMap::new();
        let mut errors = Vec::new();
        let mut strata_ci = BTreeMap::new();
        let mut inputs: Vec<&RunRecord> = Vec::new();
        for &n in &cfg.blocks {
            inputs.extend(of(task, n));
            for &s in task.required_subtasks() {
                inputs.extend(of(s, n));
            }
            let runs = ObservedRun::from_records(task, n, of(task, n));
            match simulate(task, &runs, &profiles[&n], &mc_opts(cfg.analysis_seed)) {
                Ok(s) => {
                    let single = BTreeMap::from([(n, s.clone())]);
                    match bootstrap_ci(&single, &boot_opts(derive_seed(&[cfg.analysis_seed, salt, n as u64]))) {
                        Ok(ci) => {
                            strata_ci.insert(n, (ci.low, ci.high));
                        }
                        Err(e) => errors.push(format!("{n} blocks: {e}")),
                    }
                    let achieved = mean(&s.r_pi);
                    let optimum = mean(&s.r_star);
                    regrets.push(RegretRow {
                        task,
                        n_blocks: n,
                        optimum_mean: optimum,
                        achieved_mean: achieved,
                        baseline_mean: mean(&s.r_zero),
                        regret: optimum - achieved,
                        n_runs: s.r_pi.len(),
                    });
                    strata.insert(n, s);
                }
                Err(e) => errors.push(format!("{n} blocks: {e}")),
            }
        }
        let estimate = if strata.is_empty() {
            None
        } else {
            match estimate_gd(&strata, &boot_opts(derive_seed(&[cfg.analysis_seed, salt]))) {
                Ok(e) => Some(e),
                Err(e) => {
                    errors.push(e.to_string());
                    None
                }
            }
        };
        results.insert(
            task,
            TaskResult {
                task,
                estimate,
                strata_ci,
                errors,
                input_hash: records_hash(inputs),
                m_clamped: strata.values().map(|s| s.m_clamped).sum(),
                shell_clamped: strata.values().map(|s| s.shell_clamped).sum(),
            },
        );
        samples.insert(task, strata);
    }

    let mut cells_out = Vec::new();
    let mut exclusions = Vec::new();
    let seeds = cfg.seeds.values().len();
    for &task in &cfg.tasks {
        for n in cfg.blocks_for(task) {
            let rs: Vec<&RunRecord> = of(task, n).collect();
            let n_runs = rs.iter().filter(|r| r.is_scored()).count();
            cells_out.push(CellCount {
                task,
                n_blocks: n,
                agent: cfg.agent_for(task).id(),
                seeds,
                n_runs,
                n_excluded: rs.len() - n_runs,
            });
            for r in rs.iter().filter(|r| !r.is_scored()) {
                let detail = match &r.status {
                    crate::tasks::RunStatus::Failed { reason } => Some(reason.clone()),
                    _ if !r.flags.is_empty() => Some(r.flags.join(";")),
                    _ => None,
                };
                exclusions.push(Exclusion {
                    task,
                    n_blocks: n,
                    seed: r.seed,
                    agent: r.agent.clone(),
                    status: r.status.label().to_string(),
                    detail,
                });
            }
        }
    }

    let mut aux = Aux::default();
    for &task in cfg.tasks.iter().filter(|t| measures(**t)) {
        for &n in &cfg.blocks {
            let mut per_block: Vec<f64> = of(task, n)
                .filter(|r| r.is_scored())
                .map(|r| r.stat_values(StatKind::MeasurementCount).sum::<f64>() / n as f64)
                .collect();
            if per_block.is_empty() {
                continue;
            }
            aux.measurements.push(MeasurementRow {
                task,
                n_blocks: n,
                runs: per_block.len(),
                mean_per_block: mean(&per_block),
                median_per_block: median(&mut per_block),
            });
        }
    }
    if cfg.tasks.contains(&TaskId::FallingTower) {
        let outcomes: Vec<_> = cfg
            .blocks_for(TaskId::FallingTower)
            .into_iter()
            .flat_map(|n| of(TaskId::FallingTower, n))
            .filter(|r| r.is_scored())
            .filter_map(|r| r.falling)
            .collect();
        if !outcomes.is_empty() {
            let mut heights: Vec<f64> = outcomes.iter().map(|o| o.final_height_cm).collect();
            let mut rebuilds: Vec<f64> = outcomes.iter().map(|o| o.rebuilds as f64).collect();
            aux.falling = Some(FallingRow {
                runs: outcomes.len(),
                mean_final_height: mean(&heights),
                median_final_height: median(&mut heights),
                mean_rebuilds: mean(&rebuilds),
                median_rebuilds: median(&mut rebuilds),
                mean_collapses: outcomes.iter().map(|o| o.collapses as f64).sum::<f64>() / outcomes.len() as f64,
            });
        }
    }
    for row in regrets.iter().filter(|r| r.task.is_stepped()) {
        let counterpart = row.task.stepped_counterpart().expect("stepped task");
        aux.stepping.push(SteppingRow {
            task: row.task,
            counterpart,
            n_blocks: row.n_blocks,
            stepped_regret: row.regret,
            composite_regret: regrets
                .iter()
                .find(|r| r.task == counterpart && r.n_blocks == row.n_blocks)
                .map(|r| r.regret),
        });
    }

    Ok(ResultsBundle {
        agent: agent_id.clone(),
        capability_agent: cap_id.clone(),
        prompt: cfg.prompt,
        mc_iterations: cfg.mc_iterations,
        bootstrap: cfg.bootstrap,
        analysis_seed: cfg.analysis_seed,
        blocks: cfg.blocks.clone(),
        input_hash: records_hash(&records),
        profiles,
        samples,
        results,
        cells: cells_out,
        exclusions,
        regrets,
        aux,
        records,
    })
}
