//! Matrix execution with per-cell persistence.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Layout, RunConfig};
use crate::agents::{AgentSpec, RateLimiter};
use crate::env::{DistractionCorpus, WorldState};
use crate::exec::{map_indexed, with_workers};
use crate::tasks::{run_episode, Episode, EpisodeError, EpisodeSetup, RunRecord, RunStatus, TaskId, PROMPT_VERSION};

/// One (task, block count, seed) episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub task: TaskId,
    pub n_blocks: usize,
    pub seed: u64,
}

/// Every configured cell, in task, block count, seed order.
pub fn cells(cfg: &RunConfig) -> Vec<Cell> {
    let seeds = cfg.seeds.values();
    let mut out = Vec::new();
    for &task in &cfg.tasks {
        for n_blocks in cfg.blocks_for(task) {
            out.extend(seeds.iter().map(|&seed| Cell { task, n_blocks, seed }));
        }
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub executed: usize,
    /// Cells that already had a record.
    pub skipped: usize,
    /// Executed cells by status label.
    pub statuses: BTreeMap<String, usize>,
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        HarnessError::io(path, e)
    })
}

fn load_corpus(cfg: &RunConfig) -> Result<DistractionCorpus, HarnessError> {
    match &cfg.corpus {
        Some(p) => DistractionCorpus::from_file(p).map_err(|e| HarnessError::io(p, e)),
        None => Ok(DistractionCorpus::default()),
    }
}

/// Refuses to mix records produced under different episode settings.
fn claim_directory(cfg: &RunConfig, layout: &Layout) -> Result<(), HarnessError> {
    let path = layout.config_path();
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let previous: RunConfig =
            serde_json::from_str(&text).map_err(|source| HarnessError::Json { path: path.clone(), source })?;
        if previous.settings() != cfg.settings() {
            return Err(HarnessError::ConfigMismatch(layout.root().to_path_buf()));
        }
    }
    let json = serde_json::to_vec_pretty(cfg).expect("serializable config");
    write_atomic(&path, &json)
}

/// Record for a cell whose episode could not start or crashed.
fn failed_record(cfg: &RunConfig, agent: &AgentSpec, cell: Cell, reason: String) -> RunRecord {
    RunRecord {
        task: cell.task,
        n_blocks: cell.n_blocks,
        seed: cell.seed,
        agent: agent.id(),
        prompt: cfg.prompt,
        prompt_version: PROMPT_VERSION.to_string(),
        heights: WorldState::from_seed(cell.n_blocks, cell.seed).map(|w| w.heights().to_vec()).unwrap_or_default(),
        status: RunStatus::Failed { reason },
        return_cm: None,
        steps: 0,
        phases: 0,
        perturbations: 0,
        distractions: 0,
        stats: Vec::new(),
        flags: Vec::new(),
        falling: None,
        transcript: String::new(),
    }
}

struct Shared<'a> {
    cfg: &'a RunConfig,
    layout: &'a Layout,
    corpus: &'a DistractionCorpus,
    limiters: &'a HashMap<String, Arc<RateLimiter>>,
    abort: &'a AtomicBool,
    fatal: &'a Mutex<Option<crate::agents::AgentError>>,
}

/// Runs one cell and persists it. `Ok(None)` when skipped after an abort.
fn run_cell(s: &Shared<'_>, cell: Cell) -> Result<Option<RunStatus>, HarnessError> {
    if s.abort.load(Ordering::SeqCst) {
        return Ok(None);
    }
    let cfg = s.cfg;
    let agent_spec = cfg.agent_for(cell.task);
    let prompt = cfg.prompt;
    let record_path = s.layout.record_path(agent_spec, prompt, cell.task, cell.n_blocks, cell.seed);
    let limiter = s.limiters.get(&agent_spec.id()).cloned();
    let requests = agent_spec.is_remote().then(|| s.layout.requests_dir(agent_spec, prompt));
    let setup = EpisodeSetup {
        prompt,
        noise: cfg.noise,
        max_steps: cfg.max_steps,
        falling_threshold: cfg.falling_threshold,
        timestamps: agent_spec.is_remote(),
        ..EpisodeSetup::new(cell.task, cell.n_blocks, cell.seed)
    };
    let fatal = |e: crate::agents::AgentError| {
        s.abort.store(true, Ordering::SeqCst);
        let mut slot = s.fatal.lock().expect("fatal slot");
        slot.get_or_insert(e);
        Ok(None)
    };
    let outcome = agent_spec
        .instantiate(cell.task, setup.block_count(), cell.seed, limiter, requests)
        .map_err(EpisodeError::Agent)
        .and_then(|mut agent| run_episode(&setup, agent.as_mut(), s.corpus));
    let record = match outcome {
        Ok(Episode { record, transcript }) => {
            let path = s.layout.transcript_dir(agent_spec, prompt).join(&record.transcript);
            write_atomic(&path, transcript.to_jsonl().as_bytes())?;
            record
        }
        Err(EpisodeError::Agent(e)) if e.is_fatal() => return fatal(e),
        Err(e) => {
            log::warn!("{} {}b seed {}: {e}", cell.task, cell.n_blocks, cell.seed);
            failed_record(cfg, agent_spec, cell, e.to_string())
        }
    };
    let json = serde_json::to_vec_pretty(&record).expect("serializable record");
    write_atomic(&record_path, &json)?;
    log::info!("{} {}b seed {}: {}", cell.task, cell.n_blocks, cell.seed, record.status.label());
    Ok(Some(record.status))
}

/// Runs every configured cell that has no record yet.
///
/// Per-episode failures become failed records. Missing or rejected
/// credentials stop the matrix: cells not yet started are skipped and the
/// error is returned.
pub fn run_matrix(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out);
    let corpus = load_corpus(cfg)?;
    let mut limiters = HashMap::new();
    for spec in [&cfg.agent, cfg.capability_agent()] {
        if let AgentSpec::Remote { provider } = spec {
            // Fails here, before any cell, when credentials are missing.
            spec.instantiate(TaskId::CognitiveEffort, 3, 0, None, None).map_err(HarnessError::Agent)?;
            if provider.min_interval_ms > 0 {
                limiters.insert(
                    spec.id(),
                    Arc::new(RateLimiter::new(Duration::from_millis(provider.min_interval_ms))),
                );
            }
        }
    }
    claim_directory(cfg, &layout)?;

    let all = cells(cfg);
    let todo: Vec<Cell> = all
        .iter()
        .copied()
        .filter(|c| {
            !layout.record_path(cfg.agent_for(c.task), cfg.prompt, c.task, c.n_blocks, c.seed).exists()
        })
        .collect();
    let mut summary = RunSummary { skipped: all.len() - todo.len(), ..RunSummary::default() };
    log::info!("{} cells to run, {} already complete", todo.len(), summary.skipped);

    let abort = AtomicBool::new(false);
    let fatal = Mutex::new(None);
    let shared = Shared { cfg, layout: &layout, corpus: &corpus, limiters: &limiters, abort: &abort, fatal: &fatal };
    let results = with_workers(cfg.workers, || map_indexed(cfg.exec, todo.len(), |i| run_cell(&shared, todo[i])));
    for r in results {
        if let Some(status) = r? {
            summary.executed += 1;
            *summary.statuses.entry(status.label().to_string()).or_default() += 1;
        }
    }
    if let Some(e) = fatal.into_inner().expect("fatal slot") {
        return Err(HarnessError::Agent(e));
    }
    Ok(summary)
}
