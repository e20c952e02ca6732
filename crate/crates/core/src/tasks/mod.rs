//! The task catalog: four composite tasks, five capability subtasks, the
//! falling tower and two subtask-stepping controls.

mod prompt;
mod record;
mod runner;
mod scoring;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::{AllowedActions, Collapse, EnvConfig, NoiseConfig, StopRule};

pub use prompt::{fill_template, reminder_text, system_message, template, PromptVariant, NUDGE, PROMPT_VERSION};
pub use record::{
    EpisodeMeta, FallingTowerOutcome, Role, RunRecord, RunStatus, StatKind, SubtaskStat, TokenUsage, Transcript,
    TranscriptEntry, TranscriptError,
};
pub use runner::{
    falling_tower_run, run_episode, subtask_stepping_run, Episode, EpisodeError, EpisodeSetup, FABRICATION_FLAG,
    MAX_FORMAT_REMINDERS,
};
pub use scoring::{
    extract_stats, info_gathering_return, looks_fabricated, random_pair_mean, second_tallest_stack, EpisodeOutcome,
    PhaseLog, Scored,
};

/// Blocks used by the falling tower, whatever the stratum list says.
pub const FALLING_TOWER_BLOCKS: usize = 15;
/// Falling-tower threshold range in cm when none is pinned.
pub const FALLING_THRESHOLD_RANGE: (f64, f64) = (30.0, 60.0);
/// Collapses per falling-tower episode before the tower stays up.
pub const FALLING_MAX_COLLAPSES: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    InformationGathering,
    CognitiveEffort,
    PlanAndExecute,
    Combined,
    HeightEstimation,
    GenerateConfigurations,
    EvaluateConfiguration,
    SelectConfiguration,
    Execution,
    FallingTower,
    SteppedInformationGathering,
    SteppedCombined,
}

impl TaskId {
    pub const ALL: [TaskId; 12] = [
        TaskId::InformationGathering,
        TaskId::CognitiveEffort,
        TaskId::PlanAndExecute,
        TaskId::Combined,
        TaskId::HeightEstimation,
        TaskId::GenerateConfigurations,
        TaskId::EvaluateConfiguration,
        TaskId::SelectConfiguration,
        TaskId::Execution,
        TaskId::FallingTower,
        TaskId::SteppedInformationGathering,
        TaskId::SteppedCombined,
    ];

    pub const COMPOSITE: [TaskId; 4] =
        [TaskId::InformationGathering, TaskId::CognitiveEffort, TaskId::PlanAndExecute, TaskId::Combined];

    pub const SUBTASKS: [TaskId; 5] = [
        TaskId::HeightEstimation,
        TaskId::GenerateConfigurations,
        TaskId::EvaluateConfiguration,
        TaskId::SelectConfiguration,
        TaskId::Execution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::InformationGathering => "information-gathering",
            TaskId::CognitiveEffort => "cognitive-effort",
            TaskId::PlanAndExecute => "plan-and-execute",
            TaskId::Combined => "combined",
            TaskId::HeightEstimation => "height-estimation",
            TaskId::GenerateConfigurations => "generate-configurations",
            TaskId::EvaluateConfiguration => "evaluate-configuration",
            TaskId::SelectConfiguration => "select-configuration",
            TaskId::Execution => "execution",
            TaskId::FallingTower => "falling-tower",
            TaskId::SteppedInformationGathering => "stepped-information-gathering",
            TaskId::SteppedCombined => "stepped-combined",
        }
    }

    pub fn is_composite(self) -> bool {
        Self::COMPOSITE.contains(&self)
    }

    pub fn is_subtask(self) -> bool {
        Self::SUBTASKS.contains(&self)
    }

    pub fn is_stepped(self) -> bool {
        matches!(self, TaskId::SteppedInformationGathering | TaskId::SteppedCombined)
    }

    /// Subtasks whose statistics feed the Monte Carlo optimum of a composite task.
    pub fn required_subtasks(self) -> &'static [TaskId] {
        use TaskId::*;
        match self {
            InformationGathering | SteppedInformationGathering => &[HeightEstimation],
            CognitiveEffort => &[GenerateConfigurations, EvaluateConfiguration, SelectConfiguration],
            PlanAndExecute => &[GenerateConfigurations, EvaluateConfiguration, SelectConfiguration, Execution],
            Combined | SteppedCombined => {
                &[HeightEstimation, GenerateConfigurations, EvaluateConfiguration, SelectConfiguration, Execution]
            }
            _ => &[],
        }
    }

    /// The composite task a stepping control mirrors.
    pub fn stepped_counterpart(self) -> Option<TaskId> {
        match self {
            TaskId::SteppedInformationGathering => Some(TaskId::InformationGathering),
            TaskId::SteppedCombined => Some(TaskId::Combined),
            _ => None,
        }
    }

    /// Block count forced by the task, overriding the stratum.
    pub fn fixed_block_count(self) -> Option<usize> {
        (self == TaskId::FallingTower).then_some(FALLING_TOWER_BLOCKS)
    }

    /// Environment turns allowed per phase. Tasks that expect repeated
    /// measurement of every block scale with the block count.
    pub fn default_max_steps(self, n_blocks: usize) -> u32 {
        match self {
            TaskId::InformationGathering
            | TaskId::Combined
            | TaskId::SteppedInformationGathering
            | TaskId::SteppedCombined => 100 + 30 * n_blocks as u32,
            TaskId::FallingTower => 200,
            _ => 100,
        }
    }

    pub fn default_noise(self) -> NoiseConfig {
        match self {
            TaskId::PlanAndExecute | TaskId::Combined | TaskId::Execution | TaskId::SteppedCombined => {
                NoiseConfig::STANDARD
            }
            _ => NoiseConfig::NONE,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown task '{0}'")]
pub struct UnknownTask(pub String);

impl FromStr for TaskId {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.iter().copied().find(|t| t.name() == key).ok_or_else(|| UnknownTask(s.to_string()))
    }
}

/// Static description of a task's main (or final) phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub allowed: AllowedActions,
    pub noise: NoiseConfig,
    pub stop: StopRule,
    pub max_steps: u32,
    /// Whether true heights (rounded) are shown in the prompt.
    pub reveals_heights: bool,
}

impl TaskSpec {
    pub fn new(id: TaskId, n_blocks: usize) -> Self {
        let none = AllowedActions { measure: false, manipulate: false, towers: false, height: false };
        let (allowed, stop, reveals_heights) = match id {
            TaskId::InformationGathering | TaskId::SteppedInformationGathering => {
                (AllowedActions { measure: true, manipulate: true, ..none }, StopRule::TwoBlockTowerOrDone, false)
            }
            TaskId::CognitiveEffort => (AllowedActions { towers: true, ..none }, StopRule::Declaration, true),
            TaskId::PlanAndExecute => {
                (AllowedActions { manipulate: true, towers: true, ..none }, StopRule::Done, true)
            }
            TaskId::Combined | TaskId::SteppedCombined => {
                (AllowedActions { measure: true, manipulate: true, towers: true, ..none }, StopRule::Done, false)
            }
            TaskId::HeightEstimation => {
                (AllowedActions { measure: true, height: true, ..none }, StopRule::Declaration, false)
            }
            TaskId::GenerateConfigurations => {
                (AllowedActions { towers: true, ..none }, StopRule::DoneOrExhausted, false)
            }
            TaskId::EvaluateConfiguration => (AllowedActions { height: true, ..none }, StopRule::Declaration, true),
            TaskId::SelectConfiguration => (AllowedActions { towers: true, ..none }, StopRule::Declaration, true),
            TaskId::Execution | TaskId::FallingTower => {
                (AllowedActions { manipulate: true, ..none }, StopRule::Done, false)
            }
        };
        Self { id, allowed, noise: id.default_noise(), stop, max_steps: id.default_max_steps(n_blocks), reveals_heights }
    }

    pub fn env_config(&self, collapse: Option<Collapse>) -> EnvConfig {
        EnvConfig { noise: self.noise, stop: self.stop, allowed: self.allowed, collapse }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_serde_and_from_str() {
        for t in TaskId::ALL {
            assert_eq!(t.name().parse::<TaskId>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
        assert_eq!("Cognitive_Effort".parse::<TaskId>().unwrap(), TaskId::CognitiveEffort);
        assert!("juggling".parse::<TaskId>().is_err());
    }

    #[test]
    fn composites_need_their_subtasks() {
        assert_eq!(TaskId::InformationGathering.required_subtasks(), &[TaskId::HeightEstimation]);
        assert_eq!(TaskId::Combined.required_subtasks().len(), 5);
        assert!(TaskId::PlanAndExecute.required_subtasks().contains(&TaskId::Execution));
        assert!(!TaskId::CognitiveEffort.required_subtasks().contains(&TaskId::Execution));
        for t in TaskId::SUBTASKS {
            assert!(t.required_subtasks().is_empty());
        }
    }

    #[test]
    fn noise_only_on_building_tasks_with_perturbation() {
        assert_eq!(TaskSpec::new(TaskId::PlanAndExecute, 3).noise, NoiseConfig::STANDARD);
        assert_eq!(TaskSpec::new(TaskId::Combined, 3).noise, NoiseConfig::STANDARD);
        assert_eq!(TaskSpec::new(TaskId::InformationGathering, 3).noise, NoiseConfig::NONE);
        assert_eq!(TaskSpec::new(TaskId::CognitiveEffort, 3).noise, NoiseConfig::NONE);
    }

    #[test]
    fn max_steps_positive() {
        for t in TaskId::ALL {
            for n in 3..=5 {
                assert!(TaskSpec::new(t, n).max_steps > 0);
            }
        }
        assert_eq!(TaskSpec::new(TaskId::CognitiveEffort, 5).max_steps, 100);
    }
}
