//! Agents: the random baseline, capability-profile agents (oracle and
//! noisy), a chat-completion adapter and a transcript replayer.

mod builder;
mod remote;
mod replay;
mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{BlockId, Observation};
use crate::partition::Configuration;
use crate::rng::{derive_seed, label_hash};
use crate::tasks::{TaskId, TokenUsage, Transcript};

pub use builder::{next_build_action, BuildPlan};
pub use remote::{ChatMessage, ProviderConfig, RateLimiter, RemoteAgent};
pub use replay::ReplayAgent;
pub use scripted::{ProfileAgent, ProfileParams, RandomAgent};

/// Structured view of the current phase. Scripted agents act on it; remote
/// agents only see the transcript.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseBrief {
    /// Semantics of the phase (a stepping phase reports `HeightEstimation`).
    pub task: TaskId,
    /// Composite-task phase, where a lazy agent slacks.
    pub composite: bool,
    pub n_blocks: usize,
    /// Heights as shown in the prompt, when the task reveals them.
    pub heights: Option<Vec<f64>>,
    pub target: Option<BlockId>,
    pub shown: Option<Configuration>,
    pub requested: Option<Configuration>,
    pub candidates: Vec<Configuration>,
    pub phase: usize,
}

impl PhaseBrief {
    pub fn new(task: TaskId, n_blocks: usize) -> Self {
        Self {
            task,
            composite: task.is_composite(),
            n_blocks,
            heights: None,
            target: None,
            shown: None,
            requested: None,
            candidates: Vec::new(),
            phase: 0,
        }
    }
}

/// Everything an agent may look at when producing its next message.
pub struct Turn<'a> {
    pub transcript: &'a Transcript,
    pub brief: &'a PhaseBrief,
    /// Latest environment observation (the initial one at phase start).
    pub observation: &'a Observation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentReply {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

impl AgentReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: None }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("credentials missing: environment variable {0} is not set")]
    MissingCredentials(String),
    #[error("provider rejected the credentials (HTTP {0})")]
    Unauthorized(u16),
    #[error("transport failed after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("replay transcript exhausted after {0} agent messages")]
    ReplayExhausted(usize),
    #[error("could not persist request: {0}")]
    Persist(#[from] std::io::Error),
}

impl AgentError {
    /// Errors that make every further episode fail too.
    pub fn is_fatal(&self) -> bool {
        matches!(self, AgentError::MissingCredentials(_) | AgentError::Unauthorized(_))
    }
}

pub trait Agent: Send {
    fn id(&self) -> &str;

    /// Responses are a pure function of (seed, transcript).
    fn is_deterministic(&self) -> bool;

    fn next_message(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError>;
}

/// Declarative agent choice, as written in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentSpec {
    Random,
    Oracle {
        #[serde(default = "default_oracle_k")]
        measurements: u32,
    },
    Noisy {
        #[serde(flatten)]
        profile: ProfileParams,
    },
    Remote {
        provider: ProviderConfig,
    },
    Replay {
        /// Directory holding `<task>_<n>b_<seed>.jsonl` transcripts.
        dir: std::path::PathBuf,
        id: String,
    },
}

fn default_oracle_k() -> u32 {
    20
}

impl AgentSpec {
    pub fn oracle(measurements: u32) -> Self {
        AgentSpec::Oracle { measurements }
    }

    pub fn noisy(laziness: f64) -> Self {
        AgentSpec::Noisy { profile: ProfileParams::noisy(laziness) }
    }

    pub fn id(&self) -> String {
        match self {
            AgentSpec::Random => "random".into(),
            AgentSpec::Oracle { measurements } => format!("oracle-k{measurements}"),
            AgentSpec::Noisy { profile } => profile.id(),
            AgentSpec::Remote { provider } => format!("remote-{}", provider.model),
            AgentSpec::Replay { id, .. } => id.clone(),
        }
    }

    pub fn is_remote(&self) -> bool {
        matches!(self, AgentSpec::Remote { .. })
    }

    /// Seed of the agent's private stream for one episode.
    pub fn episode_seed(&self, task: TaskId, n_blocks: usize, seed: u64) -> u64 {
        derive_seed(&[label_hash(&self.id()), label_hash(task.name()), n_blocks as u64, seed])
    }

    /// A fresh agent for one episode.
    pub fn instantiate(
        &self,
        task: TaskId,
        n_blocks: usize,
        seed: u64,
        limiter: Option<std::sync::Arc<RateLimiter>>,
        requests_dir: Option<std::path::PathBuf>,
    ) -> Result<Box<dyn Agent>, AgentError> {
        let agent_seed = self.episode_seed(task, n_blocks, seed);
        Ok(match self {
            AgentSpec::Random => Box::new(RandomAgent::new(agent_seed)),
            AgentSpec::Oracle { measurements } => {
                Box::new(ProfileAgent::new(self.id(), ProfileParams::oracle(*measurements), agent_seed))
            }
            AgentSpec::Noisy { profile } => Box::new(ProfileAgent::new(self.id(), profile.clone(), agent_seed)),
            AgentSpec::Remote { provider } => {
                let stem = crate::tasks::RunRecord::cell_stem(task, n_blocks, seed);
                Box::new(RemoteAgent::new(self.id(), provider.clone(), limiter, requests_dir, stem)?)
            }
            AgentSpec::Replay { dir, id } => {
                let stem = crate::tasks::RunRecord::cell_stem(task, n_blocks, seed);
                Box::new(ReplayAgent::from_file(id.clone(), &dir.join(format!("{stem}.jsonl")))?)
            }
        })
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// Short command-line forms: `random`, `oracle[:k]`, `noisy[:laziness]`.
impl FromStr for AgentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s.as_str(), None),
        };
        match (head, arg) {
            ("random", None) => Ok(AgentSpec::Random),
            ("oracle", None) => Ok(AgentSpec::oracle(default_oracle_k())),
            ("oracle", Some(k)) => match k.parse::<u32>() {
                Ok(k) if k >= 1 => Ok(AgentSpec::oracle(k)),
                _ => Err(format!("oracle needs a measurement count >= 1, got '{k}'")),
            },
            ("noisy", None) => Ok(AgentSpec::noisy(1.0)),
            ("noisy", Some(l)) => match l.parse::<f64>() {
                Ok(l) if l >= 1.0 => Ok(AgentSpec::noisy(l)),
                _ => Err(format!("noisy needs a laziness >= 1, got '{l}'")),
            },
            _ => Err(format!(
                "unknown agent '{s}': use random, oracle[:k], noisy[:laziness], or define a remote agent in the config file"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_forms() {
        assert_eq!("random".parse::<AgentSpec>().unwrap(), AgentSpec::Random);
        assert_eq!("oracle:5".parse::<AgentSpec>().unwrap(), AgentSpec::oracle(5));
        assert_eq!("oracle".parse::<AgentSpec>().unwrap().id(), "oracle-k20");
        assert_eq!("noisy:4".parse::<AgentSpec>().unwrap(), AgentSpec::noisy(4.0));
        assert!("oracle:0".parse::<AgentSpec>().is_err());
        assert!("noisy:0.5".parse::<AgentSpec>().is_err());
        assert!("human".parse::<AgentSpec>().is_err());
    }

    #[test]
    fn spec_toml_forms() {
        let s: AgentSpec = toml::from_str("kind = \"oracle\"\nmeasurements = 7").unwrap();
        assert_eq!(s, AgentSpec::oracle(7));
        let s: AgentSpec = toml::from_str("kind = \"noisy\"\nlaziness = 2.0").unwrap();
        assert_eq!(s, AgentSpec::noisy(2.0));
    }

    #[test]
    fn episode_seeds_differ_across_cells() {
        let a = AgentSpec::Random;
        assert_ne!(a.episode_seed(TaskId::Combined, 3, 0), a.episode_seed(TaskId::Combined, 3, 1));
        assert_ne!(a.episode_seed(TaskId::Combined, 3, 0), a.episode_seed(TaskId::CognitiveEffort, 3, 0));
        assert_eq!(a.episode_seed(TaskId::Combined, 3, 0), a.episode_seed(TaskId::Combined, 3, 0));
    }
}
