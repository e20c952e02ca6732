//! Declarative run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::agents::AgentSpec;
use crate::env::NoiseConfig;
use crate::exec::ExecMode;
use crate::mc::DEFAULT_ITERATIONS;
use crate::partition::MAX_SPACE_BLOCKS;
use crate::stats::{DEFAULT_REPLICATES, MIN_REPLICATES};
use crate::tasks::{PromptVariant, TaskId};

use super::HarnessError;

/// A seed count (`0..n`) or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(30)
    }
}

impl Seeds {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AgentField {
    Short(String),
    Full(AgentSpec),
}

impl AgentField {
    fn resolve<E: serde::de::Error>(self) -> Result<AgentSpec, E> {
        match self {
            AgentField::Short(s) => s.parse().map_err(E::custom),
            AgentField::Full(a) => Ok(a),
        }
    }
}

fn de_agent<'de, D: Deserializer<'de>>(d: D) -> Result<AgentSpec, D::Error> {
    AgentField::deserialize(d)?.resolve()
}

fn de_opt_agent<'de, D: Deserializer<'de>>(d: D) -> Result<Option<AgentSpec>, D::Error> {
    Option::<AgentField>::deserialize(d)?.map(AgentField::resolve).transpose()
}

fn default_tasks() -> Vec<TaskId> {
    TaskId::COMPOSITE.iter().chain(TaskId::SUBTASKS.iter()).copied().collect()
}

fn default_blocks() -> Vec<usize> {
    vec![3, 4, 5]
}

fn default_agent() -> AgentSpec {
    AgentSpec::Random
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

fn default_bootstrap() -> usize {
    DEFAULT_REPLICATES
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskId>,
    #[serde(default = "default_blocks")]
    pub blocks: Vec<usize>,
    #[serde(default)]
    pub seeds: Seeds,
    /// Agent evaluated on composite tasks (and on subtasks unless
    /// `capability_agent` is set).
    #[serde(default = "default_agent", deserialize_with = "de_agent")]
    pub agent: AgentSpec,
    /// Agent whose subtask runs define the capability profile.
    #[serde(default, deserialize_with = "de_opt_agent", skip_serializing_if = "Option::is_none")]
    pub capability_agent: Option<AgentSpec>,
    #[serde(default)]
    pub prompt: PromptVariant,
    /// Replaces every task's noise setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    /// Replaces every task's per-phase step cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u32>,
    /// Pins the falling-tower threshold in cm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falling_threshold: Option<f64>,
    #[serde(default = "default_iterations")]
    pub mc_iterations: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Root seed of the Monte Carlo and bootstrap streams.
    #[serde(default)]
    pub analysis_seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
    /// Episode worker threads; the global pool when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Distraction corpus file; the bundled one when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// The settings that change episode content. Records from runs that differ
/// here must not share an output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSettings {
    pub agent: AgentSpec,
    pub capability_agent: AgentSpec,
    pub prompt: PromptVariant,
    pub noise: Option<NoiseConfig>,
    pub max_steps: Option<u32>,
    pub falling_threshold: Option<f64>,
    pub corpus: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn capability_agent(&self) -> &AgentSpec {
        self.capability_agent.as_ref().unwrap_or(&self.agent)
    }

    /// Agent that runs `task`.
    pub fn agent_for(&self, task: TaskId) -> &AgentSpec {
        if task.is_subtask() {
            self.capability_agent()
        } else {
            &self.agent
        }
    }

    /// Block counts a task runs at.
    pub fn blocks_for(&self, task: TaskId) -> Vec<usize> {
        match task.fixed_block_count() {
            Some(n) => vec![n],
            None => self.blocks.clone(),
        }
    }

    pub fn settings(&self) -> EpisodeSettings {
        EpisodeSettings {
            agent: self.agent.clone(),
            capability_agent: self.capability_agent().clone(),
            prompt: self.prompt,
            noise: self.noise,
            max_steps: self.max_steps,
            falling_threshold: self.falling_threshold,
            corpus: self.corpus.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.tasks.is_empty() {
            return bad("at least one task is required".into());
        }
        if self.blocks.is_empty() {
            return bad("at least one block count is required".into());
        }
        if let Some(n) = self.blocks.iter().find(|n| !(crate::env::MIN_BLOCKS..=MAX_SPACE_BLOCKS).contains(n)) {
            return bad(format!("block count {n} is outside {}..={MAX_SPACE_BLOCKS}", crate::env::MIN_BLOCKS));
        }
        if self.seeds.values().is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.mc_iterations == 0 {
            return bad("mc_iterations must be at least 1".into());
        }
        if self.bootstrap < MIN_REPLICATES {
            return bad(format!("bootstrap must be at least {MIN_REPLICATES}"));
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive".into());
        }
        if let Some(noise) = self.noise {
            noise.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.tasks.len(), 9);
        assert_eq!(c.blocks, vec![3, 4, 5]);
        assert_eq!(c.seeds.values().len(), 30);
        assert_eq!(c.mc_iterations, 10_000);
        assert_eq!(c.bootstrap, 2000);
        assert_eq!(c.agent, AgentSpec::Random);
    }

    #[test]
    fn agent_short_and_table_forms() {
        let c = RunConfig::from_toml("agent = \"noisy:2\"\ncapability_agent = \"oracle:20\"").unwrap();
        assert_eq!(c.agent, AgentSpec::noisy(2.0));
        assert_eq!(c.capability_agent(), &AgentSpec::oracle(20));
        let c = RunConfig::from_toml(
            "tasks = [\"combined\"]\nseeds = [1, 5]\n[agent]\nkind = \"remote\"\n[agent.provider]\nendpoint = \"http://x\"\nmodel = \"m\"",
        )
        .unwrap();
        assert!(c.agent.is_remote());
        assert_eq!(c.seeds.values(), vec![1, 5]);
        assert_eq!(c.agent_for(TaskId::HeightEstimation), &c.agent);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("blocks = [2]").is_err());
        assert!(RunConfig::from_toml("seeds = 0").is_err());
        assert!(RunConfig::from_toml("mc_iterations = 0").is_err());
        assert!(RunConfig::from_toml("tasks = [\"juggling\"]").is_err());
        assert!(RunConfig::from_toml("colour = 1").is_err());
        assert!(RunConfig::from_toml("agent = \"human\"").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::from_toml("agent = \"oracle:3\"\nnoise = { perturbation = 0.1, distraction = 0.0 }").unwrap();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
