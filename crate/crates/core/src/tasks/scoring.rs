//! Return functions and subtask-statistic extraction.

use super::{FallingTowerOutcome, StatKind, SubtaskStat, TaskId};
use crate::env::{ActionKind, BlockId, StateView};
use crate::partition::{distance_to_optimum, stacks_distance, Configuration};

/// What happened in one phase, captured by the runner.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseLog {
    pub kind: TaskId,
    pub target: Option<BlockId>,
    pub shown: Option<Configuration>,
    pub requested: Option<Configuration>,
    /// Accepted declarations made during this phase, in order.
    pub declarations: Vec<ActionKind>,
    /// Measurements per block taken during this phase.
    pub measurements: Vec<u32>,
    pub measure_allowed: bool,
    pub view: StateView,
}

/// Everything scoring needs from a finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub task: TaskId,
    pub heights: Vec<f64>,
    pub phases: Vec<PhaseLog>,
    pub distinct_configs: usize,
    pub collapses: u32,
    pub rebuilds: u32,
    pub threshold_cm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub return_cm: Option<f64>,
    pub stats: Vec<SubtaskStat>,
    /// Set when the declaration the task is scored on never came.
    pub missing: Option<String>,
    /// Non-fatal gaps, such as a stepping phase without an estimate.
    pub flags: Vec<String>,
    pub falling: Option<FallingTowerOutcome>,
}

/// Mean of `h_x + h_y` over all unordered pairs: `2·Σh / n`.
pub fn random_pair_mean(heights: &[f64]) -> f64 {
    2.0 * heights.iter().sum::<f64>() / heights.len() as f64
}

/// Sum of true heights of the first two-block stack; the random-pair mean
/// when no such stack stands.
pub fn info_gathering_return(view: &StateView, heights: &[f64]) -> f64 {
    match view.towers.iter().find(|t| t.len() == 2) {
        Some(t) => t.iter().map(|b| heights[b.index()]).sum(),
        None => random_pair_mean(heights),
    }
}

/// Height of the second-tallest stack, a held block counting as its own
/// stack. Equals the lower tower when exactly two stacks stand; 0 with
/// fewer than two.
pub fn second_tallest_stack(view: &StateView, heights: &[f64]) -> f64 {
    let mut sums: Vec<f64> =
        view.towers.iter().map(|t| t.iter().map(|b| heights[b.index()]).sum()).collect();
    if let Some(h) = view.holding {
        sums.push(heights[h.index()]);
    }
    sums.sort_by(|a, b| b.total_cmp(a));
    sums.get(1).copied().unwrap_or(0.0)
}

/// More than two tags, or the agent writing the environment's state line
/// itself.
pub fn looks_fabricated(text: &str) -> bool {
    crate::env::action::count_tags(text) > 2 || text.contains("Stacks (bottom to top)")
}

fn last_height(log: &PhaseLog) -> Option<f64> {
    log.declarations.iter().rev().find_map(|d| match d {
        ActionKind::Height { cm } => Some(*cm),
        _ => None,
    })
}

fn last_towers(log: &PhaseLog, n: usize) -> Option<Configuration> {
    log.declarations.iter().rev().find_map(|d| match d {
        ActionKind::Towers { towers } => {
            let idx: Vec<Vec<usize>> = towers.iter().map(|t| t.iter().map(|b| b.index()).collect()).collect();
            Configuration::from_towers(n, &idx).ok()
        }
        _ => None,
    })
}

fn measurement_stats(log: &PhaseLog) -> impl Iterator<Item = SubtaskStat> + '_ {
    log.measurements
        .iter()
        .enumerate()
        .filter(|_| log.measure_allowed)
        .map(|(i, &c)| SubtaskStat::for_block(StatKind::MeasurementCount, c as f64, BlockId::from_index(i)))
}

fn estimation_stat(log: &PhaseLog, heights: &[f64]) -> Option<SubtaskStat> {
    let target = log.target?;
    let est = last_height(log)?;
    Some(SubtaskStat::for_block(StatKind::EstimationError, heights[target.index()] - est, target))
}

/// Return and subtask statistics for a finished episode.
pub fn extract_stats(outcome: &EpisodeOutcome) -> Scored {
    let h = &outcome.heights;
    let n = h.len();
    let mut scored = Scored { return_cm: None, stats: Vec::new(), missing: None, flags: Vec::new(), falling: None };
    let Some(last) = outcome.phases.last() else {
        scored.missing = Some("no phase completed".into());
        return scored;
    };
    for log in &outcome.phases {
        scored.stats.extend(measurement_stats(log));
    }
    match outcome.task {
        TaskId::InformationGathering => scored.return_cm = Some(info_gathering_return(&last.view, h)),
        TaskId::PlanAndExecute | TaskId::Combined => scored.return_cm = Some(second_tallest_stack(&last.view, h)),
        TaskId::CognitiveEffort => match last_towers(last, n) {
            Some(c) => scored.return_cm = Some(c.lowest_tower(h)),
            None => scored.missing = Some("no towers declaration".into()),
        },
        TaskId::HeightEstimation => match estimation_stat(last, h) {
            Some(s) => {
                scored.return_cm = Some(-s.value.abs());
                scored.stats.push(s);
            }
            None => scored.missing = Some("no height declaration".into()),
        },
        TaskId::GenerateConfigurations => {
            let m = outcome.distinct_configs as f64;
            scored.return_cm = Some(m);
            scored.stats.push(SubtaskStat::new(StatKind::ConfigurationCount, m));
        }
        TaskId::EvaluateConfiguration => {
            let shown = last.shown.expect("evaluation phase shows a configuration");
            match last_height(last) {
                Some(declared) => {
                    let err = shown.highest_tower(h) - declared;
                    scored.return_cm = Some(-err.abs());
                    scored.stats.push(SubtaskStat {
                        configuration: Some(shown.label()),
                        ..SubtaskStat::new(StatKind::EvaluationError, err)
                    });
                }
                None => scored.missing = Some("no height declaration".into()),
            }
        }
        TaskId::SelectConfiguration => match last_towers(last, n) {
            Some(c) => {
                let d = distance_to_optimum(&c, h).expect("valid block count") as f64;
                scored.return_cm = Some(-d);
                scored.stats.push(SubtaskStat {
                    configuration: Some(c.label()),
                    ..SubtaskStat::new(StatKind::SelectionDistance, d)
                });
            }
            None => scored.missing = Some("no towers declaration".into()),
        },
        TaskId::Execution => {
            let requested = last.requested.expect("execution phase requests a configuration");
            let d = stacks_distance(&last.view.stack_masks(), &requested) as f64;
            scored.return_cm = Some(-d);
            scored.stats.push(SubtaskStat {
                configuration: Some(requested.label()),
                ..SubtaskStat::new(StatKind::ExecutionDistance, d)
            });
        }
        TaskId::FallingTower => {
            let tallest = last
                .view
                .towers
                .iter()
                .map(|t| t.iter().map(|b| h[b.index()]).sum::<f64>())
                .fold(0.0, f64::max);
            scored.return_cm = Some(tallest);
            scored.stats.push(SubtaskStat::new(StatKind::RebuildCount, outcome.rebuilds as f64));
            scored.falling = Some(FallingTowerOutcome {
                threshold_cm: outcome.threshold_cm,
                final_height_cm: tallest,
                collapses: outcome.collapses,
                rebuilds: outcome.rebuilds,
            });
        }
        TaskId::SteppedInformationGathering | TaskId::SteppedCombined => {
            for log in outcome.phases.iter().filter(|p| p.kind == TaskId::HeightEstimation) {
                match estimation_stat(log, h) {
                    Some(s) => scored.stats.push(s),
                    None => scored.flags.push(format!(
                        "missing-estimate:{}",
                        log.target.map(|b| b.to_string()).unwrap_or_default()
                    )),
                }
            }
            scored.return_cm = Some(if outcome.task == TaskId::SteppedInformationGathering {
                info_gathering_return(&last.view, h)
            } else {
                second_tallest_stack(&last.view, h)
            });
        }
    }
    scored
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(c: char) -> BlockId {
        BlockId::from_letter(c).unwrap()
    }

    fn view(towers: &[&[char]], holding: Option<char>) -> StateView {
        StateView {
            towers: towers.iter().map(|t| t.iter().map(|&c| b(c)).collect()).collect(),
            holding: holding.map(b),
        }
    }

    fn log(kind: TaskId, declarations: Vec<ActionKind>, v: StateView) -> PhaseLog {
        PhaseLog {
            kind,
            target: None,
            shown: None,
            requested: None,
            declarations,
            measurements: vec![0; 3],
            measure_allowed: false,
            view: v,
        }
    }

    fn outcome(task: TaskId, heights: Vec<f64>, phases: Vec<PhaseLog>) -> EpisodeOutcome {
        EpisodeOutcome { task, heights, phases, distinct_configs: 0, collapses: 0, rebuilds: 0, threshold_cm: None }
    }

    #[test]
    fn two_block_tower_scores_true_heights() {
        // a=9.2, c=8.1
        let h = [9.2, 6.0, 8.1];
        assert!((info_gathering_return(&view(&[&['c', 'a'], &['b']], None), &h) - 17.3).abs() < 1e-12);
    }

    #[test]
    fn random_pair_expectation_for_5_7_9_is_14() {
        let h = [5.0, 7.0, 9.0];
        let pairs = [(0, 1), (0, 2), (1, 2)];
        let oracle: f64 = pairs.iter().map(|&(i, j)| h[i] + h[j]).sum::<f64>() / 3.0;
        assert!((random_pair_mean(&h) - oracle).abs() < 1e-12);
        assert!((random_pair_mean(&h) - 14.0).abs() < 1e-12);
        assert_eq!(info_gathering_return(&view(&[&['a'], &['b'], &['c']], None), &h), 14.0);
    }

    #[test]
    fn second_tallest_counts_held_block() {
        let h = [5.0, 7.0, 9.0];
        assert_eq!(second_tallest_stack(&view(&[&['a', 'b'], &['c']], None), &h), 9.0);
        assert_eq!(second_tallest_stack(&view(&[&['a', 'c']], Some('b')), &h), 7.0);
        assert_eq!(second_tallest_stack(&view(&[&['a', 'b', 'c']], None), &h), 0.0);
        assert_eq!(second_tallest_stack(&view(&[&['a'], &['b'], &['c']], None), &h), 7.0);
    }

    #[test]
    fn estimation_error_sign() {
        let mut l = log(TaskId::HeightEstimation, vec![ActionKind::Height { cm: 7.6 }], StateView::default());
        l.target = Some(b('a'));
        let s = extract_stats(&outcome(TaskId::HeightEstimation, vec![8.0, 6.0, 7.0], vec![l]));
        let e = s.stats.iter().find(|s| s.kind == StatKind::EstimationError).unwrap();
        assert!((e.value - 0.4).abs() < 1e-12);
        assert_eq!(e.block, Some(b('a')));
    }

    #[test]
    fn missing_declaration_is_reported() {
        let l = log(TaskId::CognitiveEffort, vec![ActionKind::Done], StateView::default());
        let s = extract_stats(&outcome(TaskId::CognitiveEffort, vec![5.0, 7.0, 9.0], vec![l]));
        assert!(s.missing.is_some());
        assert!(s.return_cm.is_none());
    }

    #[test]
    fn execution_distance_single_move_case() {
        // built ({a,b},{c}) vs requested ({a},{b,c})
        let mut l = log(TaskId::Execution, vec![ActionKind::Done], view(&[&['a', 'b'], &['c']], None));
        l.requested = Some(Configuration::from_towers(3, &[vec![0], vec![1, 2]]).unwrap());
        let s = extract_stats(&outcome(TaskId::Execution, vec![5.0, 7.0, 9.0], vec![l]));
        assert_eq!(s.stats.iter().find(|s| s.kind == StatKind::ExecutionDistance).unwrap().value, 1.0);
    }

    #[test]
    fn selection_distance_zero_at_optimum() {
        let towers = vec![vec![b('a'), b('b')], vec![b('c')]];
        let l = log(TaskId::SelectConfiguration, vec![ActionKind::Towers { towers }], StateView::default());
        let s = extract_stats(&outcome(TaskId::SelectConfiguration, vec![5.0, 7.0, 9.0], vec![l]));
        assert_eq!(s.stats[0].value, 0.0);
    }

    #[test]
    fn cognitive_effort_scores_lowest_tower() {
        let towers = vec![vec![b('a'), b('c')], vec![b('b')]];
        let l = log(TaskId::CognitiveEffort, vec![ActionKind::Towers { towers }], StateView::default());
        let s = extract_stats(&outcome(TaskId::CognitiveEffort, vec![5.0, 7.0, 9.0], vec![l]));
        assert_eq!(s.return_cm, Some(7.0));
    }

    #[test]
    fn fabrication_heuristic() {
        assert!(!looks_fabricated("I think <measure a>"));
        assert!(looks_fabricated("<measure a> a: 7cm <measure a> <measure b>"));
        assert!(looks_fabricated("<pick up a>\nStacks (bottom to top): [b]"));
    }
}
