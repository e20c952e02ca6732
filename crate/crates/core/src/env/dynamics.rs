//! Transition function: legality, perturbation, collapse, distraction.

use rand::Rng;

use super::text::{format_reading, render_view};
use super::{
    measure, Action, ActionKind, BlockId, DistractionCorpus, EnvConfig, EnvError, Observation, Outcome, StopRule,
    WorldState,
};
use crate::partition::{configuration_count, Configuration};

/// Every pick up, stack and put down that is legal in the current state.
pub fn legal_manipulations(state: &WorldState) -> Vec<ActionKind> {
    state.view().legal_manipulations()
}

/// With probability `p`, replaces a manipulation action by a uniformly drawn
/// legal manipulation. Other actions pass through without consuming
/// randomness. Returns the action to execute and whether it was replaced.
pub fn perturb_action<R: Rng + ?Sized>(
    action: &ActionKind,
    state: &WorldState,
    p: f64,
    rng: &mut R,
) -> (ActionKind, bool) {
    if p <= 0.0 || !action.is_manipulation() {
        return (action.clone(), false);
    }
    if rng.random::<f64>() >= p {
        return (action.clone(), false);
    }
    let legal = legal_manipulations(state);
    if legal.is_empty() {
        return (action.clone(), false);
    }
    let pick = legal[rng.random_range(0..legal.len())].clone();
    (pick, true)
}

/// With probability `q`, appends a corpus excerpt to the status text.
pub fn maybe_distract<R: Rng + ?Sized>(
    mut obs: Observation,
    q: f64,
    corpus: &DistractionCorpus,
    rng: &mut R,
) -> Result<Observation, EnvError> {
    if q <= 0.0 {
        return Ok(obs);
    }
    if corpus.is_empty() {
        return Err(EnvError::EmptyCorpus(q));
    }
    if rng.random::<f64>() < q {
        let excerpt = corpus.choose(rng).expect("non-empty corpus").to_string();
        obs.status = format!("{}\n\n{}", obs.status, excerpt);
        obs.distraction = Some(excerpt);
    }
    Ok(obs)
}

/// Applies one action. The step counter advances exactly once per call,
/// including for rejected actions, which leave the world unchanged.
pub fn apply_action(
    state: &mut WorldState,
    action: &Action,
    config: &EnvConfig,
    corpus: &DistractionCorpus,
) -> Result<Observation, EnvError> {
    if state.terminal {
        return Err(EnvError::Terminal);
    }
    config.noise.validate()?;
    if config.noise.distraction > 0.0 && corpus.is_empty() {
        return Err(EnvError::EmptyCorpus(config.noise.distraction));
    }
    state.step += 1;

    let mut measurement = None;
    let mut perturbed = false;
    let mut collapsed = false;
    let outcome = if !config.allowed.permits(&action.kind) {
        Outcome::Rejected { reason: format!("The action {} is not available in this task.", action.kind.tag()) }
    } else if let Some(unknown) = unknown_block(state, &action.kind) {
        Outcome::Rejected { reason: format!("There is no block named {unknown}.") }
    } else {
        let (kind, was_perturbed) = {
            let mut rng = state.streams.perturbation.clone();
            let r = perturb_action(&action.kind, state, config.noise.perturbation, &mut rng);
            state.streams.perturbation = rng;
            r
        };
        perturbed = was_perturbed;
        match kind {
            ActionKind::Measure { block } => {
                let reading = measure(state, block)?;
                measurement = Some((block, reading));
                Outcome::Executed { action: kind }
            }
            ActionKind::PickUp { .. } | ActionKind::Stack { .. } | ActionKind::PutDown { .. } => {
                match manipulate(state, &kind, config) {
                    Ok(fell) => {
                        collapsed = fell;
                        Outcome::Executed { action: kind }
                    }
                    Err(reason) => Outcome::Rejected { reason },
                }
            }
            ActionKind::Towers { ref towers } => match validate_towers(state, towers) {
                Ok(config) => {
                    if !state.distinct_configs.contains(&config) {
                        state.distinct_configs.push(config);
                    }
                    state.declarations.push(kind.clone());
                    Outcome::Declared { action: kind }
                }
                Err(reason) => Outcome::Rejected { reason },
            },
            ActionKind::Height { cm } => {
                if cm > 0.0 {
                    state.declarations.push(kind.clone());
                    Outcome::Declared { action: kind }
                } else {
                    Outcome::Rejected { reason: "A height must be a positive number of cm.".into() }
                }
            }
            ActionKind::Done => {
                state.declarations.push(ActionKind::Done);
                Outcome::Declared { action: ActionKind::Done }
            }
        }
    };

    state.terminal = stop_fired(state, config.stop, &outcome);
    let status = describe(state, &outcome, measurement, collapsed);
    let obs = Observation {
        status,
        measurement,
        distraction: None,
        terminal: state.terminal,
        view: state.view.clone(),
        outcome,
        perturbed,
        collapsed,
    };
    let mut rng = state.streams.distraction.clone();
    let obs = maybe_distract(obs, config.noise.distraction, corpus, &mut rng)?;
    state.streams.distraction = rng;
    Ok(obs)
}

fn unknown_block(state: &WorldState, kind: &ActionKind) -> Option<BlockId> {
    let blocks: Vec<BlockId> = match kind {
        ActionKind::Measure { block } | ActionKind::PickUp { block } | ActionKind::PutDown { block } => vec![*block],
        ActionKind::Stack { top, bottom } => vec![*top, *bottom],
        ActionKind::Towers { towers } => towers.iter().flatten().copied().collect(),
        ActionKind::Height { .. } | ActionKind::Done => vec![],
    };
    blocks.into_iter().find(|b| !state.contains(*b))
}

/// Returns whether the move made the tower collapse.
fn manipulate(state: &mut WorldState, kind: &ActionKind, config: &EnvConfig) -> Result<bool, String> {
    let view = &mut state.view;
    match *kind {
        ActionKind::PickUp { block } => {
            if let Some(h) = view.holding {
                return Err(format!("You cannot pick up {block}: you are already holding {h}."));
            }
            let idx = view.stack_of(block).expect("block conservation");
            let stack = &mut view.towers[idx];
            if stack.last() != Some(&block) {
                let above = stack[stack.iter().position(|b| *b == block).expect("in stack") + 1];
                return Err(format!("You cannot pick up {block}: {above} is on top of it."));
            }
            stack.pop();
            if stack.is_empty() {
                view.towers.remove(idx);
            }
            view.holding = Some(block);
            Ok(false)
        }
        ActionKind::PutDown { block } => {
            if view.holding != Some(block) {
                return Err(format!("You cannot put down {block}: you are not holding it."));
            }
            view.holding = None;
            view.towers.push(vec![block]);
            Ok(false)
        }
        ActionKind::Stack { top, bottom } => {
            if view.holding != Some(top) {
                return Err(format!("You cannot stack {top} on {bottom}: you are not holding {top}."));
            }
            if top == bottom {
                return Err(format!("You cannot stack {top} on itself."));
            }
            let Some(idx) = view.towers.iter().position(|t| t.last() == Some(&bottom)) else {
                return Err(format!("You cannot stack {top} on {bottom}: {bottom} is not clear."));
            };
            view.holding = None;
            view.towers[idx].push(top);
            if state.collapses > state.rebuilds {
                state.rebuilds = state.collapses;
            }
            if let Some(collapse) = config.collapse {
                let height: f64 = state.view.towers[idx].iter().map(|b| state.heights[b.index()]).sum();
                if height > collapse.threshold_cm && state.collapses < collapse.max_collapses {
                    let mut blocks: Vec<BlockId> = state.view.towers.concat();
                    blocks.sort();
                    state.view.towers = blocks.into_iter().map(|b| vec![b]).collect();
                    state.collapses += 1;
                    return Ok(true);
                }
            }
            Ok(false)
        }
        _ => unreachable!("not a manipulation"),
    }
}

fn validate_towers(state: &WorldState, towers: &[Vec<BlockId>]) -> Result<Configuration, String> {
    let idx: Vec<Vec<usize>> = towers.iter().map(|t| t.iter().map(|b| b.index()).collect()).collect();
    Configuration::from_towers(state.block_count(), &idx)
        .map_err(|e| format!("That is not a valid two-tower configuration: {e}. Every block must be in exactly one of two non-empty towers."))
}

fn stop_fired(state: &WorldState, rule: StopRule, outcome: &Outcome) -> bool {
    let done = matches!(outcome, Outcome::Declared { action: ActionKind::Done });
    match rule {
        StopRule::TwoBlockTowerOrDone => done || state.view.towers.iter().any(|t| t.len() >= 2),
        StopRule::Declaration => matches!(outcome, Outcome::Declared { .. }),
        StopRule::Done => done,
        StopRule::DoneOrExhausted => {
            done || state.distinct_configs.len() == configuration_count(state.block_count())
        }
    }
}

fn describe(state: &WorldState, outcome: &Outcome, measurement: Option<(BlockId, f64)>, collapsed: bool) -> String {
    match outcome {
        Outcome::Executed { action: ActionKind::Measure { .. } } => {
            let (b, r) = measurement.expect("measure yields a reading");
            format_reading(b, r)
        }
        Outcome::Executed { action } => {
            let what = match action {
                ActionKind::PickUp { block } => format!("You picked up {block}."),
                ActionKind::PutDown { block } => format!("You put down {block}."),
                ActionKind::Stack { top, bottom } => format!("You stacked {top} on {bottom}."),
                _ => unreachable!("executed manipulation"),
            };
            let fell = if collapsed { " The tower fell! All blocks are back on the table." } else { "" };
            format!("{what}{fell}\n{}", render_view(&state.view))
        }
        Outcome::Declared { action } => match action {
            ActionKind::Towers { towers } => {
                format!("You declared the towers {}.", super::action::render_towers(towers))
            }
            ActionKind::Height { cm } => format!("You declared a height of {cm:.2}cm."),
            ActionKind::Done => "You declared that you are done.".to_string(),
            _ => unreachable!("declaration"),
        },
        Outcome::Rejected { reason } => format!("{reason}\n{}", render_view(&state.view)),
        Outcome::Start => render_view(&state.view),
    }
}
