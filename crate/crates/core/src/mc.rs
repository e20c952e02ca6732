//! Monte Carlo estimates of the capability-conditioned optimum and the
//! random baseline.
//!
//! Each simulator resamples an observed run (true heights and its return
//! together), pushes the run's heights through the agent's measured subtask
//! errors, and scores the resulting choice with the true heights.
//! Iterations are split into fixed batches with their own generator, so the
//! output does not depend on [`ExecMode`].

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{batches, map_indexed, ExecMode};
use crate::partition::{ConfigSpace, PartitionError};
use crate::rng::{derive_seed, label_hash};
use crate::tasks::{RunRecord, StatKind, TaskId};

/// Iterations per generator batch.
pub const BATCH: usize = 512;

/// Default iteration count.
pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("no observed runs for {task} at {n_blocks} blocks")]
    NoRuns { task: TaskId, n_blocks: usize },
    #[error("capability profile for {n_blocks} blocks has no {kind} samples")]
    EmptySamples { kind: &'static str, n_blocks: usize },
    #[error("iteration count must be at least 1")]
    ZeroIterations,
    #[error("run with {got} blocks passed to the {expected}-block simulation")]
    MixedStrata { expected: usize, got: usize },
    #[error("{0} has no Monte Carlo optimum")]
    NoAlgorithm(TaskId),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Subtask statistics of one agent at one block count.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub n_blocks: usize,
    /// ε = h − ĥ from Height Estimation.
    pub estimation_errors: Vec<f64>,
    /// m from Generate Configurations.
    pub config_counts: Vec<u32>,
    /// Signed errors from Evaluate Configuration.
    pub evaluation_errors: Vec<f64>,
    /// d from Select Configuration.
    pub selection_distances: Vec<u32>,
    /// d′ from Execution.
    pub execution_distances: Vec<u32>,
}

impl CapabilityProfile {
    /// Zero errors, full enumeration, zero distances.
    pub fn perfect(n_blocks: usize) -> Self {
        let all = crate::partition::configuration_count(n_blocks) as u32;
        Self {
            n_blocks,
            estimation_errors: vec![0.0],
            config_counts: vec![all],
            evaluation_errors: vec![0.0],
            selection_distances: vec![0],
            execution_distances: vec![0],
        }
    }

    /// Collects the stratum's statistics from scored subtask records.
    /// Records of other strata and stepping controls are ignored.
    pub fn from_records<'a>(n_blocks: usize, records: impl IntoIterator<Item = &'a RunRecord>) -> Self {
        let mut p = Self { n_blocks, ..Self::default() };
        for r in records.into_iter().filter(|r| r.n_blocks == n_blocks && r.is_scored()) {
            match r.task {
                TaskId::HeightEstimation => p.estimation_errors.extend(r.stat_values(StatKind::EstimationError)),
                TaskId::GenerateConfigurations => {
                    p.config_counts.extend(r.stat_values(StatKind::ConfigurationCount).map(|v| v as u32))
                }
                TaskId::EvaluateConfiguration => p.evaluation_errors.extend(r.stat_values(StatKind::EvaluationError)),
                TaskId::SelectConfiguration => {
                    p.selection_distances.extend(r.stat_values(StatKind::SelectionDistance).map(|v| v as u32))
                }
                TaskId::Execution => {
                    p.execution_distances.extend(r.stat_values(StatKind::ExecutionDistance).map(|v| v as u32))
                }
                _ => {}
            }
        }
        p
    }

    /// The sample set a subtask contributes, by task id.
    pub fn sample_count(&self, subtask: TaskId) -> usize {
        match subtask {
            TaskId::HeightEstimation => self.estimation_errors.len(),
            TaskId::GenerateConfigurations => self.config_counts.len(),
            TaskId::EvaluateConfiguration => self.evaluation_errors.len(),
            TaskId::SelectConfiguration => self.selection_distances.len(),
            TaskId::Execution => self.execution_distances.len(),
            _ => 0,
        }
    }

    fn require(&self, subtask: TaskId) -> Result<(), McError> {
        if self.sample_count(subtask) == 0 {
            return Err(McError::EmptySamples { kind: subtask.name(), n_blocks: self.n_blocks });
        }
        Ok(())
    }
}

/// One observed composite run: true heights and the return it achieved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedRun {
    pub heights: Vec<f64>,
    pub return_cm: f64,
}

impl ObservedRun {
    /// Scored records of `task` at `n_blocks`.
    pub fn from_records<'a>(
        task: TaskId,
        n_blocks: usize,
        records: impl IntoIterator<Item = &'a RunRecord>,
    ) -> Vec<ObservedRun> {
        records
            .into_iter()
            .filter(|r| r.task == task && r.n_blocks == n_blocks)
            .filter_map(|r| {
                let ret = r.return_cm.filter(|_| r.is_scored())?;
                Some(ObservedRun { heights: r.heights.clone(), return_cm: ret })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSamples {
    pub task: TaskId,
    pub n_blocks: usize,
    pub iterations: usize,
    /// Observed returns, one per scored run.
    pub r_pi: Vec<f64>,
    /// Simulated optimum under the agent's capabilities, length `iterations`.
    pub r_star: Vec<f64>,
    /// Simulated random baseline, length `iterations`.
    pub r_zero: Vec<f64>,
    /// Iterations whose sampled m was outside 1..=all and got clamped.
    pub m_clamped: u64,
    /// Displacements that fell back to a nearer shell.
    pub shell_clamped: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McOptions {
    pub iterations: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, seed: 0, mode: ExecMode::default() }
    }
}

#[derive(Clone, Copy, Default)]
struct Draw {
    star: f64,
    zero: f64,
    m_clamped: bool,
    shell_clamped: u32,
}

fn pick<'a, T, R: Rng + ?Sized>(xs: &'a [T], rng: &mut R) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

/// Indices of the two largest entries: the pair with the largest sum.
pub fn preferred_pair(estimates: &[f64]) -> (usize, usize) {
    let (mut a, mut b) = if estimates[1] > estimates[0] { (1, 0) } else { (0, 1) };
    for (i, &x) in estimates.iter().enumerate().skip(2) {
        if x > estimates[a] {
            b = a;
            a = i;
        } else if x > estimates[b] {
            b = i;
        }
    }
    (a, b)
}

fn random_pair_sum<R: Rng + ?Sized>(h: &[f64], rng: &mut R) -> f64 {
    let i = rng.random_range(0..h.len());
    let mut j = rng.random_range(0..h.len() - 1);
    if j >= i {
        j += 1;
    }
    h[i] + h[j]
}

fn check_runs(task: TaskId, n: usize, runs: &[ObservedRun], opts: &McOptions) -> Result<(), McError> {
    if opts.iterations == 0 {
        return Err(McError::ZeroIterations);
    }
    if runs.is_empty() {
        return Err(McError::NoRuns { task, n_blocks: n });
    }
    if let Some(r) = runs.iter().find(|r| r.heights.len() != n) {
        return Err(McError::MixedStrata { expected: n, got: r.heights.len() });
    }
    Ok(())
}

fn simulate_with<F>(task: TaskId, n: usize, runs: &[ObservedRun], opts: &McOptions, draw: F) -> ReturnSamples
where
    F: Fn(&[f64], &mut ChaCha8Rng) -> Draw + Sync + Send,
{
    let chunks = batches(opts.iterations, BATCH);
    let salt = label_hash(task.name());
    let results = map_indexed(opts.mode, chunks.len(), |bi| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[opts.seed, salt, n as u64, bi as u64]));
        chunks[bi]
            .clone()
            .map(|_| {
                let run = pick(runs, &mut rng);
                draw(&run.heights, &mut rng)
            })
            .collect::<Vec<Draw>>()
    });
    let mut out = ReturnSamples {
        task,
        n_blocks: n,
        iterations: opts.iterations,
        r_pi: runs.iter().map(|r| r.return_cm).collect(),
        r_star: Vec::with_capacity(opts.iterations),
        r_zero: Vec::with_capacity(opts.iterations),
        m_clamped: 0,
        shell_clamped: 0,
    };
    for d in results.into_iter().flatten() {
        out.r_star.push(d.star);
        out.r_zero.push(d.zero);
        out.m_clamped += u64::from(d.m_clamped);
        out.shell_clamped += u64::from(d.shell_clamped);
    }
    out
}

/// Two-block tower from noisy height estimates.
pub fn simulate_info_gathering(
    runs: &[ObservedRun],
    profile: &CapabilityProfile,
    opts: &McOptions,
) -> Result<ReturnSamples, McError> {
    let n = profile.n_blocks;
    check_runs(TaskId::InformationGathering, n, runs, opts)?;
    profile.require(TaskId::HeightEstimation)?;
    let eps = &profile.estimation_errors;
    Ok(simulate_with(TaskId::InformationGathering, n, runs, opts, |h, rng| {
        let est: Vec<f64> = h.iter().map(|&x| x + *pick(eps, rng)).collect();
        let (a, b) = preferred_pair(&est);
        Draw { star: h[a] + h[b], zero: random_pair_sum(h, rng), ..Draw::default() }
    }))
}

/// Which heights the configuration evaluation starts from.
#[derive(Clone, Copy, PartialEq)]
enum Inputs {
    True,
    Estimated,
}

struct TwoTower<'a> {
    space: &'a ConfigSpace,
    profile: &'a CapabilityProfile,
    inputs: Inputs,
    execute: bool,
}

impl TwoTower<'_> {
    fn draw(&self, h: &[f64], rng: &mut ChaCha8Rng) -> Draw {
        let p = self.profile;
        let total = self.space.len();
        let raw_m = *pick(&p.config_counts, rng) as usize;
        let m = raw_m.clamp(1, total);
        let basis: Vec<f64> = match self.inputs {
            Inputs::True => h.to_vec(),
            Inputs::Estimated => h.iter().map(|&x| x + *pick(&p.estimation_errors, rng)).collect(),
        };
        let mut best = (f64::NEG_INFINITY, 0usize);
        for idx in sample_indices(rng, total, m).into_iter() {
            let score = self.space.configs()[idx].lowest_tower(&basis) + *pick(&p.evaluation_errors, rng);
            if score > best.0 {
                best = (score, idx);
            }
        }
        let d = *pick(&p.selection_distances, rng);
        let (mut chosen, c1) = self.space.sample_at_distance(best.1, d, rng);
        let mut shell_clamped = u32::from(c1);
        if self.execute {
            let d_exec = *pick(&p.execution_distances, rng);
            let (built, c2) = self.space.sample_at_distance(chosen, d_exec, rng);
            chosen = built;
            shell_clamped += u32::from(c2);
        }
        let star = self.space.configs()[chosen].lowest_tower(h);
        let zero = pick(self.space.configs(), rng).lowest_tower(h);
        Draw { star, zero, m_clamped: raw_m != m, shell_clamped }
    }
}

fn simulate_two_tower(
    task: TaskId,
    runs: &[ObservedRun],
    profile: &CapabilityProfile,
    opts: &McOptions,
) -> Result<ReturnSamples, McError> {
    let n = profile.n_blocks;
    check_runs(task, n, runs, opts)?;
    let needed = match task {
        TaskId::CognitiveEffort => TaskId::CognitiveEffort.required_subtasks(),
        TaskId::PlanAndExecute => TaskId::PlanAndExecute.required_subtasks(),
        _ => TaskId::Combined.required_subtasks(),
    };
    for &s in needed {
        profile.require(s)?;
    }
    let space = ConfigSpace::new(n)?;
    let sim = TwoTower {
        space: &space,
        profile,
        inputs: if task == TaskId::CognitiveEffort || task == TaskId::PlanAndExecute {
            Inputs::True
        } else {
            Inputs::Estimated
        },
        execute: task != TaskId::CognitiveEffort,
    };
    Ok(simulate_with(task, n, runs, opts, |h, rng| sim.draw(h, rng)))
}

/// Conceive m configurations, evaluate with error, select with slip.
pub fn simulate_cognitive_effort(
    runs: &[ObservedRun],
    profile: &CapabilityProfile,
    opts: &McOptions,
) -> Result<ReturnSamples, McError> {
    simulate_two_tower(TaskId::CognitiveEffort, runs, profile, opts)
}

/// Cognitive effort followed by an execution displacement d′.
pub fn simulate_plan_execute(
    runs: &[ObservedRun],
    profile: &CapabilityProfile,
    opts: &McOptions,
) -> Result<ReturnSamples, McError> {
    simulate_two_tower(TaskId::PlanAndExecute, runs, profile, opts)
}

/// Plan and execute on estimated block heights.
pub fn simulate_combined(
    runs: &[ObservedRun],
    profile: &CapabilityProfile,
    opts: &McOptions,
) -> Result<ReturnSamples, McError> {
    simulate_two_tower(TaskId::Combined, runs, profile, opts)
}

/// Dispatches on the composite task; stepping controls use their
/// counterpart's algorithm but keep their own label.
pub fn simulate(
    task: TaskId,
    runs: &[ObservedRun],
    profile: &CapabilityProfile,
    opts: &McOptions,
) -> Result<ReturnSamples, McError> {
    let mut samples = match task.stepped_counterpart().unwrap_or(task) {
        TaskId::InformationGathering => simulate_info_gathering(runs, profile, opts),
        TaskId::CognitiveEffort => simulate_cognitive_effort(runs, profile, opts),
        TaskId::PlanAndExecute => simulate_plan_execute(runs, profile, opts),
        TaskId::Combined => simulate_combined(runs, profile, opts),
        other => Err(McError::NoAlgorithm(other)),
    }?;
    samples.task = task;
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs(h: &[f64]) -> Vec<ObservedRun> {
        vec![ObservedRun { heights: h.to_vec(), return_cm: 0.0 }]
    }

    fn opts(iterations: usize) -> McOptions {
        McOptions { iterations, seed: 1, mode: ExecMode::Sequential }
    }

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn hand_traced_pair() {
        // ĥ = (8, 7, 9) picks {a, c}: true 5 + 9.
        let est = [5.0 + 3.0, 7.0, 9.0];
        let (a, b) = preferred_pair(&est);
        assert_eq!((a.min(b), a.max(b)), (0, 2));
        assert_eq!([5.0, 7.0, 9.0][a] + [5.0, 7.0, 9.0][b], 14.0);
    }

    #[test]
    fn preferred_pair_ties_and_order() {
        assert_eq!(preferred_pair(&[1.0, 3.0, 2.0]), (1, 2));
        assert_eq!(preferred_pair(&[4.0, 4.0, 1.0]), (0, 1));
    }

    #[test]
    fn zero_error_info_gathering_is_optimal() {
        let s = simulate_info_gathering(&runs(&[5.0, 7.0, 9.0]), &CapabilityProfile::perfect(3), &opts(2000)).unwrap();
        assert!(s.r_star.iter().all(|&r| r == 16.0));
        assert_eq!(s.r_star.len(), 2000);
    }

    #[test]
    fn modes_give_identical_samples() {
        let p = CapabilityProfile {
            n_blocks: 4,
            estimation_errors: vec![-0.5, 0.2, 0.9],
            config_counts: vec![1, 3, 9],
            evaluation_errors: vec![-1.0, 0.5],
            selection_distances: vec![0, 1],
            execution_distances: vec![0, 2],
        };
        let r = runs(&[5.5, 6.0, 8.0, 9.5]);
        for task in [TaskId::InformationGathering, TaskId::Combined] {
            let a = simulate(task, &r, &p, &McOptions { iterations: 3000, seed: 4, mode: ExecMode::Sequential });
            let b = simulate(task, &r, &p, &McOptions { iterations: 3000, seed: 4, mode: ExecMode::Parallel });
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        let p = CapabilityProfile::perfect(3);
        assert!(matches!(simulate_info_gathering(&[], &p, &opts(10)), Err(McError::NoRuns { .. })));
        assert_eq!(
            simulate_cognitive_effort(&runs(&[5.0, 6.0, 7.0]), &p, &opts(0)),
            Err(McError::ZeroIterations)
        );
        let mut q = p.clone();
        q.execution_distances.clear();
        assert!(matches!(
            simulate_plan_execute(&runs(&[5.0, 6.0, 7.0]), &q, &opts(10)),
            Err(McError::EmptySamples { kind: "execution", .. })
        ));
        assert!(simulate_cognitive_effort(&runs(&[5.0, 6.0, 7.0]), &q, &opts(10)).is_ok());
        assert!(matches!(
            simulate_info_gathering(&runs(&[5.0, 6.0, 7.0, 8.0]), &p, &opts(10)),
            Err(McError::MixedStrata { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn oversized_and_zero_m_are_clamped_and_counted() {
        let mut p = CapabilityProfile::perfect(3);
        p.config_counts = vec![0, 50];
        let s = simulate_cognitive_effort(&runs(&[5.0, 7.0, 9.0]), &p, &opts(1000)).unwrap();
        assert_eq!(s.m_clamped, 1000);
        assert!((mean(&s.r_zero) - 7.0).abs() < 0.2);
    }
}
