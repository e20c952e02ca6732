//! Scripted agents. `RandomAgent` realizes the uniform baseline;
//! `ProfileAgent` realizes a chosen capability level, with an optional
//! laziness factor that degrades only its composite-task behavior.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::builder::{next_build_action, BuildPlan};
use super::{Agent, AgentError, AgentReply, PhaseBrief, Turn};
use crate::env::{round_cm, ActionKind, BlockId, MAX_HEIGHT_CM, MIN_HEIGHT_CM};
use crate::partition::{enumerate_configurations, sample_at_distance, Configuration};
use crate::rng::{stream, stream_rng};
use crate::tasks::TaskId;

fn reply(kind: ActionKind) -> Result<AgentReply, AgentError> {
    Ok(AgentReply::text(kind.tag()))
}

fn towers_of(c: &Configuration) -> ActionKind {
    ActionKind::Towers {
        towers: c.towers().iter().map(|t| t.iter().map(|&i| BlockId::from_index(i)).collect()).collect(),
    }
}

fn all_configs(n: usize) -> Vec<Configuration> {
    enumerate_configurations(n).expect("task block counts are valid")
}

/// Uniform baseline. Primitive-action tasks draw uniformly over the legal
/// actions; declaration tasks draw a uniform declaration; building tasks
/// draw a uniform target configuration and build it.
pub struct RandomAgent {
    rng: ChaCha8Rng,
    phase: Option<usize>,
    plan: Option<BuildPlan>,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream_rng(seed, stream::AGENT), phase: None, plan: None }
    }

    fn uniform_config(&mut self, n: usize) -> Configuration {
        let configs = all_configs(n);
        configs[self.rng.random_range(0..configs.len())]
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> &str {
        "random"
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn next_message(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let brief = turn.brief;
        let view = &turn.observation.view;
        let n = brief.n_blocks;
        if self.phase != Some(brief.phase) {
            self.phase = Some(brief.phase);
            self.plan = None;
        }
        match brief.task {
            TaskId::InformationGathering | TaskId::SteppedInformationGathering | TaskId::FallingTower => {
                let mut options: Vec<ActionKind> = Vec::new();
                if brief.task != TaskId::FallingTower {
                    options.extend((0..n).map(|i| ActionKind::Measure { block: BlockId::from_index(i) }));
                }
                options.extend(view.legal_manipulations());
                options.push(ActionKind::Done);
                let pick = options.swap_remove(self.rng.random_range(0..options.len()));
                reply(pick)
            }
            TaskId::HeightEstimation => {
                let k = self.rng.random_range(0..=n);
                if k < n {
                    reply(ActionKind::Measure { block: BlockId::from_index(k) })
                } else {
                    reply(ActionKind::Height { cm: round_cm(self.rng.random_range(MIN_HEIGHT_CM..MAX_HEIGHT_CM)) })
                }
            }
            TaskId::CognitiveEffort | TaskId::SelectConfiguration => {
                let c = self.uniform_config(n);
                reply(towers_of(&c))
            }
            TaskId::GenerateConfigurations => {
                let configs = all_configs(n);
                let k = self.rng.random_range(0..=configs.len());
                if k < configs.len() {
                    reply(towers_of(&configs[k]))
                } else {
                    reply(ActionKind::Done)
                }
            }
            TaskId::EvaluateConfiguration => {
                let total: f64 = brief.heights.as_ref().map(|h| h.iter().sum()).unwrap_or(7.5 * n as f64);
                reply(ActionKind::Height { cm: round_cm(self.rng.random_range(0.5 * total..total)) })
            }
            TaskId::PlanAndExecute | TaskId::Combined | TaskId::Execution | TaskId::SteppedCombined => {
                if self.plan.is_none() {
                    let c = self.uniform_config(n);
                    self.plan = Some(BuildPlan::from_configuration(&c));
                }
                reply(next_build_action(self.plan.as_ref().expect("plan set"), view))
            }
        }
    }
}

/// Capability knobs of a [`ProfileAgent`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileParams {
    /// Readings per block when estimating heights in subtasks.
    pub measurements: u32,
    /// Configurations the agent conceives of; `None` means all of them.
    pub configs: Option<u32>,
    /// Standard deviation of the agent's tower-height evaluations, cm.
    pub evaluation_sd: f64,
    /// Chance of declaring a neighbor of the configuration it judged best.
    pub selection_slip: f64,
    /// Chance of building a neighbor of the configuration it meant to build.
    pub execution_slip: f64,
    /// Chance of quitting when the falling tower collapses.
    pub give_up: f64,
    /// Composite-task degradation: error scales grow by this factor, so the
    /// measurement budget shrinks by its square.
    pub laziness: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self::noisy(1.0)
    }
}

impl ProfileParams {
    pub fn oracle(measurements: u32) -> Self {
        Self {
            measurements: measurements.max(1),
            configs: None,
            evaluation_sd: 0.0,
            selection_slip: 0.0,
            execution_slip: 0.0,
            give_up: 0.0,
            laziness: 1.0,
        }
    }

    /// The reference noisy agent used in calibration runs.
    pub fn noisy(laziness: f64) -> Self {
        Self {
            measurements: 4,
            configs: None,
            evaluation_sd: 0.3,
            selection_slip: 0.05,
            execution_slip: 0.05,
            give_up: 0.3,
            laziness,
        }
    }

    pub fn id(&self) -> String {
        if *self == Self::oracle(self.measurements) {
            return format!("oracle-k{}", self.measurements);
        }
        if *self == Self::noisy(self.laziness) {
            return format!("noisy-l{}", self.laziness);
        }
        let configs = self.configs.map(|m| m.to_string()).unwrap_or_else(|| "all".into());
        format!(
            "profile-k{}-m{}-e{}-s{}-x{}-g{}-l{}",
            self.measurements,
            configs,
            self.evaluation_sd,
            self.selection_slip,
            self.execution_slip,
            self.give_up,
            self.laziness
        )
    }

    fn scale(&self, composite: bool) -> f64 {
        if composite {
            self.laziness.max(1.0)
        } else {
            1.0
        }
    }

    /// Total readings across `n` blocks: `n·k / L²`, at least one.
    pub fn measurement_budget(&self, n: usize, composite: bool) -> usize {
        let l = self.scale(composite);
        ((n as f64 * self.measurements as f64 / (l * l)).round() as usize).max(1)
    }

    pub fn conceived(&self, total: usize, composite: bool) -> usize {
        let base = self.configs.map(|m| m as usize).unwrap_or(total).min(total);
        ((base as f64 / self.scale(composite)).ceil() as usize).clamp(1, total)
    }

    pub fn evaluation_sd(&self, composite: bool) -> f64 {
        self.evaluation_sd * self.scale(composite)
    }

    pub fn selection_slip(&self, composite: bool) -> f64 {
        (self.selection_slip * self.scale(composite)).min(1.0)
    }

    pub fn execution_slip(&self, composite: bool) -> f64 {
        (self.execution_slip * self.scale(composite)).min(1.0)
    }
}

/// Agent that measures, evaluates, selects and builds according to its
/// [`ProfileParams`]. With the oracle parameters it realizes the
/// capability-conditioned optimum for its measurement count.
pub struct ProfileAgent {
    id: String,
    params: ProfileParams,
    rng: ChaCha8Rng,
    readings: Vec<Vec<f64>>,
    order: Vec<usize>,
    phase: Option<usize>,
    phase_readings: usize,
    plan: Option<BuildPlan>,
    pending: Vec<Configuration>,
    listed: bool,
}

impl ProfileAgent {
    pub fn new(id: String, params: ProfileParams, seed: u64) -> Self {
        Self {
            id,
            params,
            rng: stream_rng(seed, stream::AGENT),
            readings: Vec::new(),
            order: Vec::new(),
            phase: None,
            phase_readings: 0,
            plan: None,
            pending: Vec::new(),
            listed: false,
        }
    }

    fn start_phase(&mut self, brief: &PhaseBrief) {
        if self.readings.len() != brief.n_blocks {
            self.readings = vec![Vec::new(); brief.n_blocks];
            self.order = (0..brief.n_blocks).collect();
            self.order.shuffle(&mut self.rng);
        }
        self.phase = Some(brief.phase);
        self.phase_readings = 0;
        self.plan = None;
        self.pending.clear();
        self.listed = false;
    }

    /// Sample means; blocks never measured get the midpoint of the height range.
    fn estimates(&self) -> Vec<f64> {
        self.readings
            .iter()
            .map(|r| if r.is_empty() { 0.5 * (MIN_HEIGHT_CM + MAX_HEIGHT_CM) } else { r.iter().sum::<f64>() / r.len() as f64 })
            .collect()
    }

    /// Next block to measure while the budget lasts: fewest readings first,
    /// ties in the agent's private block order.
    fn next_measurement(&self, budget: usize) -> Option<BlockId> {
        let taken: usize = self.readings.iter().map(Vec::len).sum();
        if taken >= budget {
            return None;
        }
        self.order.iter().copied().min_by_key(|&b| self.readings[b].len()).map(BlockId::from_index)
    }

    /// Conceive, evaluate and select a configuration from `heights`.
    fn choose(&mut self, heights: &[f64], composite: bool) -> Configuration {
        let mut configs = all_configs(heights.len());
        let m = self.params.conceived(configs.len(), composite);
        configs.shuffle(&mut self.rng);
        configs.truncate(m);
        let sd = self.params.evaluation_sd(composite);
        let noise = Normal::new(0.0, sd.max(0.0)).expect("non-negative sd");
        let mut best: Option<(f64, Configuration)> = None;
        for c in configs {
            let score = c.lowest_tower(heights) + if sd > 0.0 { noise.sample(&mut self.rng) } else { 0.0 };
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, c));
            }
        }
        let chosen = best.expect("at least one configuration").1;
        self.slip(chosen, self.params.selection_slip(composite))
    }

    fn slip(&mut self, c: Configuration, p: f64) -> Configuration {
        if p > 0.0 && self.rng.random::<f64>() < p {
            sample_at_distance(&c, 1, &mut self.rng).config
        } else {
            c
        }
    }

    fn build(&mut self, target: impl FnOnce(&mut Self) -> BuildPlan, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        if self.plan.is_none() {
            let plan = target(self);
            self.plan = Some(plan);
        }
        reply(next_build_action(self.plan.as_ref().expect("plan set"), &turn.observation.view))
    }
}

impl Agent for ProfileAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn next_message(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let brief = turn.brief;
        if self.phase != Some(brief.phase) {
            self.start_phase(brief);
        }
        if let Some((b, r)) = turn.observation.measurement {
            self.readings[b.index()].push(r);
            self.phase_readings += 1;
        }
        let n = brief.n_blocks;
        let composite = brief.composite;
        match brief.task {
            TaskId::HeightEstimation => {
                let target = brief.target.unwrap_or(BlockId::from_index(0));
                let k = self.params.measurements as usize;
                if self.phase_readings < k {
                    return reply(ActionKind::Measure { block: target });
                }
                let r = &self.readings[target.index()];
                let recent = &r[r.len() - k..];
                reply(ActionKind::Height { cm: round_cm(recent.iter().sum::<f64>() / k as f64) })
            }
            TaskId::InformationGathering | TaskId::SteppedInformationGathering => {
                if let Some(b) = self.next_measurement(self.params.measurement_budget(n, composite)) {
                    return reply(ActionKind::Measure { block: b });
                }
                let est = self.estimates();
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| est[b].total_cmp(&est[a]).then(a.cmp(&b)));
                let (bottom, top) = (BlockId::from_index(idx[1]), BlockId::from_index(idx[0]));
                let view = &turn.observation.view;
                match view.holding {
                    Some(h) if h == top => reply(ActionKind::Stack { top, bottom }),
                    Some(h) => reply(ActionKind::PutDown { block: h }),
                    None => reply(ActionKind::PickUp { block: top }),
                }
            }
            TaskId::GenerateConfigurations => {
                if !self.listed {
                    let mut configs = all_configs(n);
                    configs.shuffle(&mut self.rng);
                    configs.truncate(self.params.conceived(configs.len(), composite));
                    configs.reverse();
                    self.pending = configs;
                    self.listed = true;
                }
                match self.pending.pop() {
                    Some(c) => reply(towers_of(&c)),
                    None => reply(ActionKind::Done),
                }
            }
            TaskId::EvaluateConfiguration => {
                let heights = brief.heights.clone().unwrap_or_else(|| self.estimates());
                let shown = brief.shown.expect("evaluation shows a configuration");
                let sd = self.params.evaluation_sd(composite);
                let err = if sd > 0.0 { Normal::new(0.0, sd).expect("positive sd").sample(&mut self.rng) } else { 0.0 };
                reply(ActionKind::Height { cm: round_cm(shown.highest_tower(&heights) + err) })
            }
            TaskId::SelectConfiguration => {
                let heights = brief.heights.clone().unwrap_or_else(|| self.estimates());
                let candidates = if brief.candidates.is_empty() { all_configs(n) } else { brief.candidates.clone() };
                let mut best = candidates[0];
                for c in &candidates[1..] {
                    if c.lowest_tower(&heights) > best.lowest_tower(&heights) {
                        best = *c;
                    }
                }
                let chosen = self.slip(best, self.params.selection_slip(composite));
                reply(towers_of(&chosen))
            }
            TaskId::CognitiveEffort => {
                let heights = brief.heights.clone().unwrap_or_else(|| self.estimates());
                let c = self.choose(&heights, composite);
                reply(towers_of(&c))
            }
            TaskId::PlanAndExecute | TaskId::Combined | TaskId::SteppedCombined => {
                if self.plan.is_none() && brief.heights.is_none() {
                    if let Some(b) = self.next_measurement(self.params.measurement_budget(n, composite)) {
                        return reply(ActionKind::Measure { block: b });
                    }
                }
                self.build(
                    |agent| {
                        let heights = brief.heights.clone().unwrap_or_else(|| agent.estimates());
                        let c = agent.choose(&heights, composite);
                        let c = agent.slip(c, agent.params.execution_slip(composite));
                        BuildPlan::from_configuration(&c)
                    },
                    turn,
                )
            }
            TaskId::Execution => self.build(
                |agent| {
                    let requested = brief.requested.expect("execution requests a configuration");
                    let c = agent.slip(requested, agent.params.execution_slip(composite));
                    BuildPlan::from_configuration(&c)
                },
                turn,
            ),
            TaskId::FallingTower => {
                if turn.observation.collapsed && self.rng.random::<f64>() < self.params.give_up {
                    return reply(ActionKind::Done);
                }
                self.build(|_| BuildPlan::single_tower(n), turn)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laziness_scales_composite_behavior_only() {
        let p = ProfileParams::noisy(2.0);
        assert_eq!(p.measurement_budget(4, false), 16);
        assert_eq!(p.measurement_budget(4, true), 4);
        assert_eq!(ProfileParams::noisy(4.0).measurement_budget(3, true), 1);
        assert_eq!(p.conceived(7, false), 7);
        assert_eq!(p.conceived(7, true), 4);
        assert!((p.evaluation_sd(true) - 0.6).abs() < 1e-12);
        assert!((p.evaluation_sd(false) - 0.3).abs() < 1e-12);
        assert!((p.selection_slip(true) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ids() {
        assert_eq!(ProfileParams::oracle(20).id(), "oracle-k20");
        assert_eq!(ProfileParams::noisy(4.0).id(), "noisy-l4");
        let custom = ProfileParams { configs: Some(3), ..ProfileParams::noisy(1.0) };
        assert!(custom.id().starts_with("profile-k4-m3"));
    }

    #[test]
    fn oracle_selection_is_exact() {
        let mut a = ProfileAgent::new("o".into(), ProfileParams::oracle(1), 3);
        let c = a.choose(&[5.0, 7.0, 9.0], true);
        assert_eq!(c.lowest_tower(&[5.0, 7.0, 9.0]), 9.0);
    }
}
