//! Batch orchestration: run a matrix of episodes into an output directory,
//! analyze the persisted records, and write report tables.
//!
//! Directory layout under `out`:
//!
//! ```text
//! config.json                      resolved RunConfig of the latest run
//! runs/<agent>/<prompt>/records/<task>_<n>b_<seed>.json
//! runs/<agent>/<prompt>/transcripts/<task>_<n>b_<seed>.jsonl
//! runs/<agent>/<prompt>/requests/  outbound request bodies (remote agents)
//! bundle.json                      ResultsBundle written by analyze
//! report/                          gd.csv, regret.csv, capabilities.csv, aux.csv, plot.json
//! ```
//!
//! A record file marks its cell complete; it is written after the
//! transcript, atomically, so an interrupted run resumes at the first
//! missing cell.

mod analyze;
mod config;
mod report;
mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agents::{AgentError, AgentSpec};
use crate::tasks::{PromptVariant, RunRecord, TaskId};

pub use analyze::{
    analyze_dir, analyze_records, load_records, records_hash, Aux, CellCount, Exclusion, FallingRow,
    MeasurementRow, RegretRow, ResultsBundle, SteppingRow, TaskResult, AnalyzeOptions,
};
pub use config::{EpisodeSettings, RunConfig, Seeds};
pub use report::{read_bundle, report, write_bundle, REPORT_FILES};
pub use run::{cells, run_matrix, write_atomic, Cell, RunSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0} already holds a run with different agent, prompt, noise or step settings; use a fresh output directory")]
    ConfigMismatch(PathBuf),
    #[error("aborting: {0}")]
    Agent(AgentError),
    #[error("{missing} configured cells have no record yet (first: {first}); run the matrix first")]
    Incomplete { missing: usize, first: String },
    #[error("{task} at {n_blocks} blocks needs {subtask} records, but {subtask} is not part of the run")]
    MissingSubtask { task: TaskId, subtask: TaskId, n_blocks: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// Paths inside an output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

/// Agent ids may contain characters that are awkward in paths.
fn path_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.root.join("bundle.json")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn agent_dir(&self, agent: &AgentSpec, prompt: PromptVariant) -> PathBuf {
        self.root.join("runs").join(path_safe(&agent.id())).join(prompt.name())
    }

    pub fn record_path(&self, agent: &AgentSpec, prompt: PromptVariant, task: TaskId, n: usize, seed: u64) -> PathBuf {
        self.agent_dir(agent, prompt).join("records").join(format!("{}.json", RunRecord::cell_stem(task, n, seed)))
    }

    pub fn transcript_dir(&self, agent: &AgentSpec, prompt: PromptVariant) -> PathBuf {
        self.agent_dir(agent, prompt).join("transcripts")
    }

    pub fn requests_dir(&self, agent: &AgentSpec, prompt: PromptVariant) -> PathBuf {
        self.agent_dir(agent, prompt).join("requests")
    }
}
