//! Prompt text. Templates live in `assets/prompts/<version>/` and use
//! `{slot}` placeholders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TaskId;

pub const PROMPT_VERSION: &str = "v1";

const SYSTEM: &str = include_str!("../../assets/prompts/v1/system.txt");
const MOTIVATED: &str = include_str!("../../assets/prompts/v1/motivated.txt");
const DEMOTIVATED: &str = include_str!("../../assets/prompts/v1/demotivated.txt");
const REMINDER: &str = include_str!("../../assets/prompts/v1/reminder.txt");
pub const NUDGE: &str = include_str!("../../assets/prompts/v1/nudge.txt");

const STEPPED_PREAMBLE: &str = include_str!("../../assets/prompts/v1/stepped-preamble.txt");
const STEPPED_HEIGHT: &str = include_str!("../../assets/prompts/v1/stepped-height.txt");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    Motivated,
    #[default]
    Neutral,
    Demotivated,
}

impl PromptVariant {
    pub fn name(self) -> &'static str {
        match self {
            PromptVariant::Motivated => "motivated",
            PromptVariant::Neutral => "neutral",
            PromptVariant::Demotivated => "demotivated",
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "motivated" => Ok(PromptVariant::Motivated),
            "neutral" => Ok(PromptVariant::Neutral),
            "demotivated" => Ok(PromptVariant::Demotivated),
            other => Err(format!("unknown prompt variant '{other}' (expected motivated, neutral or demotivated)")),
        }
    }
}

/// System message, with the motivational line appended for non-neutral variants.
pub fn system_message(variant: PromptVariant) -> String {
    let base = SYSTEM.trim_end();
    match variant {
        PromptVariant::Neutral => base.to_string(),
        PromptVariant::Motivated => format!("{base}\n\n{}", MOTIVATED.trim_end()),
        PromptVariant::Demotivated => format!("{base}\n\n{}", DEMOTIVATED.trim_end()),
    }
}

pub fn reminder_text() -> &'static str {
    REMINDER.trim_end()
}

/// Raw instruction template for a task's opening message.
pub fn template(task: TaskId) -> &'static str {
    match task {
        TaskId::InformationGathering => include_str!("../../assets/prompts/v1/information-gathering.txt"),
        TaskId::CognitiveEffort => include_str!("../../assets/prompts/v1/cognitive-effort.txt"),
        TaskId::PlanAndExecute => include_str!("../../assets/prompts/v1/plan-and-execute.txt"),
        TaskId::Combined => include_str!("../../assets/prompts/v1/combined.txt"),
        TaskId::HeightEstimation => include_str!("../../assets/prompts/v1/height-estimation.txt"),
        TaskId::GenerateConfigurations => include_str!("../../assets/prompts/v1/generate-configurations.txt"),
        TaskId::EvaluateConfiguration => include_str!("../../assets/prompts/v1/evaluate-configuration.txt"),
        TaskId::SelectConfiguration => include_str!("../../assets/prompts/v1/select-configuration.txt"),
        TaskId::Execution => include_str!("../../assets/prompts/v1/execution.txt"),
        TaskId::FallingTower => include_str!("../../assets/prompts/v1/falling-tower.txt"),
        TaskId::SteppedInformationGathering => {
            include_str!("../../assets/prompts/v1/stepped-information-gathering.txt")
        }
        TaskId::SteppedCombined => include_str!("../../assets/prompts/v1/stepped-combined.txt"),
    }
}

pub(crate) fn stepped_preamble() -> &'static str {
    STEPPED_PREAMBLE
}

pub(crate) fn stepped_height() -> &'static str {
    STEPPED_HEIGHT
}

/// Replaces every `{key}` with its value. Unknown placeholders are left as is.
pub fn fill_template(template: &str, slots: &[(&str, String)]) -> String {
    let mut out = template.to_string();
    for (key, value) in slots {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out.trim_end().to_string()
}
