//! Drives one agent through one seeded episode and scores it.

use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use thiserror::Error;

use super::prompt::{stepped_height, stepped_preamble};
use super::scoring::{extract_stats, looks_fabricated, EpisodeOutcome, PhaseLog};
use super::{
    fill_template, reminder_text, system_message, template, EpisodeMeta, PromptVariant, Role, RunRecord, RunStatus,
    TaskId, TaskSpec, Transcript, TranscriptEntry, FALLING_MAX_COLLAPSES, FALLING_THRESHOLD_RANGE, NUDGE,
    PROMPT_VERSION,
};
use crate::agents::{Agent, AgentError, PhaseBrief, Turn};
use crate::env::action::render_towers;
use crate::env::text::{render_heights, render_view};
use crate::env::{
    apply_action, block_ids, parse_action, round_cm, BlockId, Collapse, DistractionCorpus, EnvError, NoiseConfig,
    Observation, WorldState,
};
use crate::partition::{enumerate_configurations, Configuration, PartitionError};
use crate::rng::{stream, stream_rng};

/// Format reminders in a row before the episode is excluded.
pub const MAX_FORMAT_REMINDERS: u32 = 3;

/// Flag set when an agent message looks like invented environment output.
pub const FABRICATION_FLAG: &str = "fabricated-environment-text";

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSetup {
    pub task: TaskId,
    /// Ignored by tasks with a fixed block count.
    pub n_blocks: usize,
    pub seed: u64,
    pub prompt: PromptVariant,
    /// Overrides the task's noise in every phase.
    pub noise: Option<NoiseConfig>,
    /// Overrides the per-phase step cap.
    pub max_steps: Option<u32>,
    /// Falling-tower threshold; drawn per seed when unset.
    pub falling_threshold: Option<f64>,
    /// Wall-clock timestamps on transcript entries.
    pub timestamps: bool,
}

impl EpisodeSetup {
    pub fn new(task: TaskId, n_blocks: usize, seed: u64) -> Self {
        Self {
            task,
            n_blocks,
            seed,
            prompt: PromptVariant::Neutral,
            noise: None,
            max_steps: None,
            falling_threshold: None,
            timestamps: false,
        }
    }

    pub fn block_count(&self) -> usize {
        self.task.fixed_block_count().unwrap_or(self.n_blocks)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub record: RunRecord,
    pub transcript: Transcript,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    /// Only errors that doom every later episode end up here; others mark
    /// the run failed.
    #[error(transparent)]
    Agent(AgentError),
    #[error("task {0} has no subtask-stepping variant")]
    NotSteppable(TaskId),
}

struct Phase {
    brief: PhaseBrief,
    spec: TaskSpec,
    text: String,
    collapse: Option<Collapse>,
}

fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn render_config(c: &Configuration) -> String {
    let towers: Vec<Vec<BlockId>> =
        c.towers().iter().map(|t| t.iter().map(|&i| BlockId::from_index(i)).collect()).collect();
    render_towers(&towers)
}

fn block_list(n: usize) -> String {
    block_ids(n).iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
}

/// Opening message slots and the structured brief for every phase.
fn plan_phases(setup: &EpisodeSetup, state: &WorldState) -> Result<(Vec<Phase>, Option<f64>), EpisodeError> {
    let n = state.block_count();
    let task = setup.task;
    let mut setup_rng = stream_rng(setup.seed, stream::SETUP);
    let shown_heights: Vec<f64> = state.heights().iter().map(|&h| round_cm(h)).collect();
    let heights_text =
        render_heights(&block_ids(n).into_iter().zip(shown_heights.iter().copied()).collect::<Vec<_>>());
    let state_text = render_view(state.view());
    let base_slots = || {
        vec![
            ("count", n.to_string()),
            ("blocks", block_list(n)),
            ("heights", heights_text.clone()),
            ("nudge", NUDGE.trim_end().to_string()),
            ("state", state_text.clone()),
        ]
    };
    let spec_for = |id: TaskId| {
        let mut spec = TaskSpec::new(id, n);
        if let Some(noise) = setup.noise {
            spec.noise = noise;
        }
        if let Some(cap) = setup.max_steps {
            spec.max_steps = cap;
        }
        spec
    };

    if task.is_stepped() {
        let mut phases = Vec::with_capacity(n + 1);
        for (i, target) in block_ids(n).into_iter().enumerate() {
            let mut brief = PhaseBrief::new(TaskId::HeightEstimation, n);
            brief.composite = false;
            brief.target = Some(target);
            brief.phase = i;
            let mut text = fill_template(stepped_height(), &[("target", target.to_string())]);
            if i == 0 {
                text = format!("{}\n\n{text}", fill_template(stepped_preamble(), &base_slots()));
            }
            phases.push(Phase { brief, spec: spec_for(TaskId::HeightEstimation), text, collapse: None });
        }
        let mut brief = PhaseBrief::new(task, n);
        brief.composite = false;
        brief.phase = n;
        let text = fill_template(template(task), &base_slots());
        phases.push(Phase { brief, spec: spec_for(task), text, collapse: None });
        return Ok((phases, None));
    }

    let spec = spec_for(task);
    let mut brief = PhaseBrief::new(task, n);
    if spec.reveals_heights {
        brief.heights = Some(shown_heights.clone());
    }
    let mut slots = base_slots();
    let mut collapse = None;
    let mut threshold = None;
    match task {
        TaskId::HeightEstimation => {
            let target = BlockId::from_index((setup.seed % n as u64) as usize);
            brief.target = Some(target);
            slots.push(("target", target.to_string()));
        }
        TaskId::EvaluateConfiguration => {
            let all = enumerate_configurations(n)?;
            let shown = all[setup_rng.random_range(0..all.len())];
            brief.shown = Some(shown);
            slots.push(("configuration", render_config(&shown)));
        }
        TaskId::Execution => {
            let all = enumerate_configurations(n)?;
            let requested = all[setup_rng.random_range(0..all.len())];
            brief.requested = Some(requested);
            slots.push(("configuration", render_config(&requested)));
        }
        TaskId::SelectConfiguration => {
            let all = enumerate_configurations(n)?;
            let listing = all.iter().map(|c| format!("- {}", render_config(c))).collect::<Vec<_>>().join("\n");
            slots.push(("candidates", listing));
            brief.candidates = all;
        }
        TaskId::FallingTower => {
            let t = setup.falling_threshold.unwrap_or_else(|| {
                let (lo, hi) = FALLING_THRESHOLD_RANGE;
                setup_rng.random_range(lo..hi)
            });
            threshold = Some(t);
            collapse = Some(Collapse { threshold_cm: t, max_collapses: FALLING_MAX_COLLAPSES });
        }
        _ => {}
    }
    let text = fill_template(template(task), &slots);
    Ok((vec![Phase { brief, spec, text, collapse }], threshold))
}

/// Runs one episode to its stopping condition, the step cap, or exclusion.
///
/// Environment text is buffered and flushed just before each agent call, so
/// environment and agent turns alternate even across phase boundaries.
pub fn run_episode(
    setup: &EpisodeSetup,
    agent: &mut dyn Agent,
    corpus: &DistractionCorpus,
) -> Result<Episode, EpisodeError> {
    let n = setup.block_count();
    let mut state = WorldState::from_seed(n, setup.seed)?;
    let (phases, threshold) = plan_phases(setup, &state)?;
    let mut transcript = Transcript::new(EpisodeMeta {
        task: setup.task,
        n_blocks: n,
        seed: setup.seed,
        agent: agent.id().to_string(),
        prompt: setup.prompt,
        prompt_version: PROMPT_VERSION.to_string(),
    });
    let stamp = |t: bool| t.then(now_secs);
    transcript.push(TranscriptEntry {
        role: Role::System,
        text: system_message(setup.prompt),
        timestamp: stamp(setup.timestamps),
        usage: None,
    });

    let mut pending: Vec<String> = Vec::new();
    let mut status = RunStatus::Completed;
    let mut logs = Vec::with_capacity(phases.len());
    let mut perturbations = 0;
    let mut distractions = 0;
    let mut flags: Vec<String> = Vec::new();

    'phases: for phase in &phases {
        if !logs.is_empty() {
            state.resume();
        }
        let config = phase.spec.env_config(phase.collapse);
        let counts_before = state.measurement_counts().to_vec();
        let decl_before = state.declarations().len();
        let mut obs = Observation::initial(render_view(state.view()), state.view().clone());
        pending.push(phase.text.clone());
        let mut phase_steps = 0u32;
        let mut failures = 0u32;
        while !state.is_terminal() {
            if phase_steps >= phase.spec.max_steps {
                status = RunStatus::Capped;
                break 'phases;
            }
            transcript.push(TranscriptEntry {
                role: Role::Environment,
                text: pending.join("\n\n"),
                timestamp: stamp(setup.timestamps),
                usage: None,
            });
            pending.clear();
            let reply = match agent.next_message(&Turn { transcript: &transcript, brief: &phase.brief, observation: &obs })
            {
                Ok(r) => r,
                Err(e) if e.is_fatal() => return Err(EpisodeError::Agent(e)),
                Err(e) => {
                    status = RunStatus::Failed { reason: e.to_string() };
                    break 'phases;
                }
            };
            if looks_fabricated(&reply.text) && !flags.iter().any(|f| f == FABRICATION_FLAG) {
                flags.push(FABRICATION_FLAG.to_string());
            }
            let parsed = parse_action(&reply.text);
            transcript.push(TranscriptEntry {
                role: Role::Agent,
                text: reply.text,
                timestamp: stamp(setup.timestamps),
                usage: reply.usage,
            });
            match parsed {
                Err(_) => {
                    failures += 1;
                    if failures > MAX_FORMAT_REMINDERS {
                        status = RunStatus::ParseExcluded;
                        break 'phases;
                    }
                    pending.push(reminder_text().to_string());
                }
                Ok(action) => {
                    failures = 0;
                    obs = apply_action(&mut state, &action, &config, corpus)?;
                    phase_steps += 1;
                    perturbations += u32::from(obs.perturbed);
                    distractions += u32::from(obs.distraction.is_some());
                    pending.push(obs.status.clone());
                }
            }
        }
        let measurements =
            state.measurement_counts().iter().zip(&counts_before).map(|(after, before)| after - before).collect();
        logs.push(PhaseLog {
            kind: phase.brief.task,
            target: phase.brief.target,
            shown: phase.brief.shown,
            requested: phase.brief.requested,
            declarations: state.declarations()[decl_before..].to_vec(),
            measurements,
            measure_allowed: phase.spec.allowed.measure,
            view: state.view().clone(),
        });
    }
    if !pending.is_empty() {
        transcript.push(TranscriptEntry {
            role: Role::Environment,
            text: pending.join("\n\n"),
            timestamp: stamp(setup.timestamps),
            usage: None,
        });
    }

    let mut return_cm = None;
    let mut stats = Vec::new();
    let mut falling = None;
    if status == RunStatus::Completed {
        let scored = extract_stats(&EpisodeOutcome {
            task: setup.task,
            heights: state.heights().to_vec(),
            phases: logs,
            distinct_configs: state.distinct_configs().len(),
            collapses: state.collapses(),
            rebuilds: state.rebuilds(),
            threshold_cm: threshold,
        });
        flags.extend(scored.flags);
        match scored.missing {
            Some(what) => {
                flags.push(format!("missing:{what}"));
                status = RunStatus::NoDeclaration;
            }
            None => {
                return_cm = scored.return_cm;
                stats = scored.stats;
                falling = scored.falling;
            }
        }
    }

    let record = RunRecord {
        task: setup.task,
        n_blocks: n,
        seed: setup.seed,
        agent: agent.id().to_string(),
        prompt: setup.prompt,
        prompt_version: PROMPT_VERSION.to_string(),
        heights: state.heights().to_vec(),
        status,
        return_cm,
        steps: state.step(),
        phases: phases.len(),
        perturbations,
        distractions,
        stats,
        flags,
        falling,
        transcript: format!("{}.jsonl", RunRecord::cell_stem(setup.task, n, setup.seed)),
    };
    Ok(Episode { record, transcript })
}

/// Falling tower with an optional pinned threshold (∞ disables collapse).
pub fn falling_tower_run(
    agent: &mut dyn Agent,
    threshold_cm: Option<f64>,
    seed: u64,
    corpus: &DistractionCorpus,
) -> Result<Episode, EpisodeError> {
    let mut setup = EpisodeSetup::new(TaskId::FallingTower, super::FALLING_TOWER_BLOCKS, seed);
    setup.falling_threshold = threshold_cm;
    run_episode(&setup, agent, corpus)
}

/// The same-context control for a composite task: one estimation phase per
/// block, then the build request.
pub fn subtask_stepping_run(
    agent: &mut dyn Agent,
    composite: TaskId,
    n_blocks: usize,
    seed: u64,
    corpus: &DistractionCorpus,
) -> Result<Episode, EpisodeError> {
    let task = match composite {
        TaskId::InformationGathering | TaskId::SteppedInformationGathering => TaskId::SteppedInformationGathering,
        TaskId::Combined | TaskId::SteppedCombined => TaskId::SteppedCombined,
        other => return Err(EpisodeError::NotSteppable(other)),
    };
    run_episode(&EpisodeSetup::new(task, n_blocks, seed), agent, corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentReply, AgentSpec};
    use crate::tasks::StatKind;

    /// Sends scripted messages in order, then `<done>`.
    struct Script {
        messages: Vec<String>,
        next: usize,
    }

    impl Script {
        fn new(messages: &[&str]) -> Self {
            Self { messages: messages.iter().map(|s| s.to_string()).collect(), next: 0 }
        }
    }

    impl Agent for Script {
        fn id(&self) -> &str {
            "script"
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn next_message(&mut self, _turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
            let m = self.messages.get(self.next).cloned().unwrap_or_else(|| "<done>".into());
            self.next += 1;
            Ok(AgentReply::text(m))
        }
    }

    fn corpus() -> DistractionCorpus {
        DistractionCorpus::default()
    }

    #[test]
    fn cognitive_effort_scores_declared_configuration() {
        let setup = EpisodeSetup::new(TaskId::CognitiveEffort, 3, 2);
        let ep = run_episode(&setup, &mut Script::new(&["I pick <towers [a, b]; [c]>"]), &corpus()).unwrap();
        let h = &ep.record.heights;
        assert_eq!(ep.record.status, RunStatus::Completed);
        assert_eq!(ep.record.return_cm, Some((h[0] + h[1]).min(h[2])));
        assert_eq!(ep.record.steps, 1);
    }

    #[test]
    fn done_without_declaration_is_excluded() {
        let setup = EpisodeSetup::new(TaskId::CognitiveEffort, 3, 2);
        let ep = run_episode(&setup, &mut Script::new(&["<done>"]), &corpus()).unwrap();
        assert_eq!(ep.record.status, RunStatus::NoDeclaration);
        assert!(!ep.record.is_scored());
    }

    #[test]
    fn three_reminders_then_exclusion() {
        let setup = EpisodeSetup::new(TaskId::CognitiveEffort, 3, 2);
        let ep = run_episode(&setup, &mut Script::new(&["hmm", "hmm", "hmm", "hmm"]), &corpus()).unwrap();
        assert_eq!(ep.record.status, RunStatus::ParseExcluded);
        let reminders = ep.transcript.entries().iter().filter(|e| e.text.contains(reminder_text())).count();
        assert_eq!(reminders, MAX_FORMAT_REMINDERS as usize);

        let ep = run_episode(&setup, &mut Script::new(&["hmm", "hmm", "hmm", "<towers [a]; [b, c]>"]), &corpus())
            .unwrap();
        assert_eq!(ep.record.status, RunStatus::Completed);
    }

    #[test]
    fn step_cap_marks_capped() {
        let mut setup = EpisodeSetup::new(TaskId::HeightEstimation, 3, 0);
        setup.max_steps = Some(5);
        let msgs = vec!["<measure a>"; 50];
        let ep = run_episode(&setup, &mut Script::new(&msgs), &corpus()).unwrap();
        assert_eq!(ep.record.status, RunStatus::Capped);
        assert_eq!(ep.record.steps, 5);
        let env_turns = ep.transcript.entries().iter().filter(|e| e.role == Role::Environment).count();
        assert!(env_turns <= 6);
    }

    #[test]
    fn turns_alternate_after_system_message() {
        let spec = AgentSpec::oracle(3);
        let mut agent = spec.instantiate(TaskId::SteppedCombined, 3, 1, None, None).unwrap();
        let ep = subtask_stepping_run(agent.as_mut(), TaskId::Combined, 3, 1, &corpus()).unwrap();
        let roles: Vec<Role> = ep.transcript.entries().iter().map(|e| e.role).collect();
        assert_eq!(roles[0], Role::System);
        for w in roles[1..].windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn stepping_has_one_estimation_phase_per_block() {
        let spec = AgentSpec::oracle(2);
        for n in [3, 4] {
            let mut agent = spec.instantiate(TaskId::SteppedInformationGathering, n, 5, None, None).unwrap();
            let ep = subtask_stepping_run(agent.as_mut(), TaskId::InformationGathering, n, 5, &corpus()).unwrap();
            assert_eq!(ep.record.phases, n + 1);
            assert_eq!(ep.record.status, RunStatus::Completed);
            assert_eq!(ep.record.stat_values(StatKind::EstimationError).count(), n);
        }
        let mut agent = spec.instantiate(TaskId::CognitiveEffort, 3, 0, None, None).unwrap();
        assert!(matches!(
            subtask_stepping_run(agent.as_mut(), TaskId::CognitiveEffort, 3, 0, &corpus()),
            Err(EpisodeError::NotSteppable(_))
        ));
    }

    #[test]
    fn context_grows_across_stepping_phases() {
        let spec = AgentSpec::oracle(1);
        let mut agent = spec.instantiate(TaskId::SteppedCombined, 3, 3, None, None).unwrap();
        let ep = subtask_stepping_run(agent.as_mut(), TaskId::Combined, 3, 3, &corpus()).unwrap();
        let mut prefix = Transcript::new(ep.transcript.meta.clone());
        let mut last = 0;
        for e in ep.transcript.entries() {
            prefix.push(e.clone());
            assert!(prefix.context_chars() > last);
            last = prefix.context_chars();
        }
    }

    #[test]
    fn falling_tower_without_threshold_builds_everything() {
        let spec = AgentSpec::oracle(1);
        let mut agent = spec.instantiate(TaskId::FallingTower, 15, 0, None, None).unwrap();
        let ep = falling_tower_run(agent.as_mut(), Some(f64::INFINITY), 0, &corpus()).unwrap();
        let total: f64 = ep.record.heights.iter().sum();
        let f = ep.record.falling.unwrap();
        assert_eq!(f.collapses, 0);
        assert!((f.final_height_cm - total).abs() < 1e-9);
        assert_eq!(ep.record.n_blocks, 15);
    }

    #[test]
    fn episodes_are_reproducible() {
        for task in [TaskId::Combined, TaskId::InformationGathering, TaskId::Execution] {
            let spec = AgentSpec::noisy(2.0);
            let run = || {
                let mut a = spec.instantiate(task, 4, 9, None, None).unwrap();
                run_episode(&EpisodeSetup::new(task, 4, 9), a.as_mut(), &corpus()).unwrap()
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn capability_agents_complete_every_task() {
        for task in TaskId::ALL {
            for spec in [AgentSpec::Random, AgentSpec::oracle(4), AgentSpec::noisy(4.0)] {
                for seed in 0..3 {
                    let setup = EpisodeSetup::new(task, 3, seed);
                    let mut a = spec.instantiate(task, setup.block_count(), seed, None, None).unwrap();
                    let ep = run_episode(&setup, a.as_mut(), &corpus()).unwrap();
                    assert!(
                        ep.record.is_scored(),
                        "{task} {} seed {seed}: {:?} {:?}",
                        spec.id(),
                        ep.record.status,
                        ep.record.flags
                    );
                }
            }
        }
    }

    #[test]
    fn transcript_file_round_trips() {
        let spec = AgentSpec::oracle(2);
        let mut a = spec.instantiate(TaskId::Combined, 3, 0, None, None).unwrap();
        let ep = run_episode(&EpisodeSetup::new(TaskId::Combined, 3, 0), a.as_mut(), &corpus()).unwrap();
        assert_eq!(Transcript::from_jsonl(&ep.transcript.to_jsonl()).unwrap(), ep.transcript);
        assert_eq!(ep.record.transcript, "combined_3b_0.jsonl");
    }
}
