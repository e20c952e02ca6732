//! Persisted episode data: transcripts (JSON Lines) and run records.

use serde::{Deserialize, Serialize};

use super::{PromptVariant, TaskId};
use crate::env::BlockId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatKind {
    /// ε = h − ĥ from a height declaration.
    EstimationError,
    /// Distinct configurations produced in Generate Configurations.
    ConfigurationCount,
    /// True taller-tower height minus the declared one.
    EvaluationError,
    /// Partition distance from the declared to the nearest optimal configuration.
    SelectionDistance,
    /// Moves separating the built stacks from the requested configuration.
    ExecutionDistance,
    MeasurementCount,
    RebuildCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtaskStat {
    pub kind: StatKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub configuration: Option<String>,
}

impl SubtaskStat {
    pub fn new(kind: StatKind, value: f64) -> Self {
        Self { kind, value, block: None, configuration: None }
    }

    pub fn for_block(kind: StatKind, value: f64, block: BlockId) -> Self {
        Self { block: Some(block), ..Self::new(kind, value) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// Hit the step cap before the stopping condition.
    Capped,
    /// Too many consecutive unparseable messages.
    ParseExcluded,
    /// Ended without the declaration the task is scored on.
    NoDeclaration,
    /// The agent could not produce a message (transport failure).
    Failed { reason: String },
}

impl RunStatus {
    pub fn is_scored(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Capped => "capped",
            RunStatus::ParseExcluded => "parse-excluded",
            RunStatus::NoDeclaration => "no-declaration",
            RunStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FallingTowerOutcome {
    /// None when the tower never falls.
    pub threshold_cm: Option<f64>,
    pub final_height_cm: f64,
    pub collapses: u32,
    pub rebuilds: u32,
}

/// One seeded episode. Everything the analysis needs is in here; the
/// transcript is kept for audit and replay only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: TaskId,
    pub n_blocks: usize,
    pub seed: u64,
    pub agent: String,
    pub prompt: PromptVariant,
    pub prompt_version: String,
    /// True heights in block order.
    pub heights: Vec<f64>,
    #[serde(flatten)]
    pub status: RunStatus,
    #[serde(rename = "return")]
    pub return_cm: Option<f64>,
    pub steps: u32,
    pub phases: usize,
    pub perturbations: u32,
    pub distractions: u32,
    pub stats: Vec<SubtaskStat>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falling: Option<FallingTowerOutcome>,
    pub transcript: String,
}

impl RunRecord {
    pub fn is_scored(&self) -> bool {
        self.status.is_scored() && self.return_cm.is_some()
    }

    pub fn stat_values(&self, kind: StatKind) -> impl Iterator<Item = f64> + '_ {
        self.stats.iter().filter(move |s| s.kind == kind).map(|s| s.value)
    }

    /// `<task>_<n>b_<seed>` without extension.
    pub fn cell_stem(task: TaskId, n_blocks: usize, seed: u64) -> String {
        format!("{}_{}b_{}", task.name(), n_blocks, seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    System,
    Environment,
    Agent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
    /// Unix seconds; only recorded for remote agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub task: TaskId,
    pub n_blocks: usize,
    pub seed: u64,
    pub agent: String,
    pub prompt: PromptVariant,
    pub prompt_version: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum Line {
    Episode(EpisodeMeta),
    Turn(TranscriptEntry),
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("transcript line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("transcript has no episode header")]
    MissingHeader,
}

/// Append-only conversation log. The system message and the first task
/// message open it; environment and agent turns alternate afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub meta: EpisodeMeta,
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(meta: EpisodeMeta) -> Self {
        Self { meta, entries: Vec::new() }
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn push_text(&mut self, role: Role, text: impl Into<String>) {
        self.push(TranscriptEntry { role, text: text.into(), timestamp: None, usage: None });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&TranscriptEntry> {
        self.entries.last()
    }

    /// Characters in the whole conversation so far.
    pub fn context_chars(&self) -> usize {
        self.entries.iter().map(|e| e.text.len()).sum()
    }

    pub fn agent_messages(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(|e| e.role == Role::Agent).map(|e| e.text.as_str())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Line::Episode(self.meta.clone())).expect("serializable");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(&Line::Turn(e.clone())).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut meta = None;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str(line).map_err(|source| TranscriptError::Json { line: i + 1, source })? {
                Line::Episode(m) => meta = Some(m),
                Line::Turn(e) => entries.push(e),
            }
        }
        Ok(Self { meta: meta.ok_or(TranscriptError::MissingHeader)?, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> EpisodeMeta {
        EpisodeMeta {
            task: TaskId::HeightEstimation,
            n_blocks: 3,
            seed: 4,
            agent: "oracle-k20".into(),
            prompt: PromptVariant::Neutral,
            prompt_version: "v1".into(),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = Transcript::new(meta());
        t.push_text(Role::System, "sys");
        t.push_text(Role::Environment, "task\nwith newline");
        t.push(TranscriptEntry {
            role: Role::Agent,
            text: "<measure a>".into(),
            timestamp: Some(1.5),
            usage: Some(TokenUsage { prompt_tokens: Some(10), completion_tokens: None }),
        });
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(Transcript::from_jsonl(&text).unwrap(), t);
        assert_eq!(t.agent_messages().collect::<Vec<_>>(), vec!["<measure a>"]);
    }

    #[test]
    fn record_json_uses_flat_status_and_return_key() {
        let r = RunRecord {
            task: TaskId::CognitiveEffort,
            n_blocks: 3,
            seed: 1,
            agent: "random".into(),
            prompt: PromptVariant::Neutral,
            prompt_version: "v1".into(),
            heights: vec![5.0, 7.0, 9.0],
            status: RunStatus::Failed { reason: "timeout".into() },
            return_cm: None,
            steps: 0,
            phases: 1,
            perturbations: 0,
            distractions: 0,
            stats: vec![SubtaskStat::new(StatKind::SelectionDistance, 1.0)],
            flags: vec![],
            falling: None,
            transcript: "x.jsonl".into(),
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["status"], "failed");
        assert_eq!(v["reason"], "timeout");
        assert!(v["return"].is_null());
        let back: RunRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn missing_header_is_an_error() {
        let line = r#"{"type":"turn","role":"agent","text":"x"}"#;
        assert!(matches!(Transcript::from_jsonl(line), Err(TranscriptError::MissingHeader)));
    }
}
