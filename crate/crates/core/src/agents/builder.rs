//! Stateless plan executor: given the visible state and a target set of
//! stacks, returns the next move. Because it only looks at the current
//! state, it repairs perturbed moves without extra bookkeeping.

use crate::env::{ActionKind, BlockId, StateView};
use crate::partition::Configuration;

/// Target stacks, bottom block first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildPlan {
    pub towers: Vec<Vec<BlockId>>,
}

impl BuildPlan {
    /// Both towers of a configuration, blocks in index order.
    pub fn from_configuration(c: &Configuration) -> Self {
        Self { towers: c.towers().iter().map(|t| t.iter().map(|&i| BlockId::from_index(i)).collect()).collect() }
    }

    /// One stack of all `n` blocks.
    pub fn single_tower(n: usize) -> Self {
        Self { towers: vec![(0..n).map(BlockId::from_index).collect()] }
    }

    pub fn is_complete(&self, view: &StateView) -> bool {
        view.holding.is_none()
            && view.towers.len() == self.towers.len()
            && self.towers.iter().all(|t| view.towers.contains(t))
    }

    fn is_prefix(&self, stack: &[BlockId]) -> bool {
        self.towers.iter().any(|t| stack.len() <= t.len() && t[..stack.len()] == *stack)
    }

    fn locate(&self, block: BlockId) -> Option<(usize, usize)> {
        self.towers.iter().enumerate().find_map(|(ti, t)| t.iter().position(|&b| b == block).map(|p| (ti, p)))
    }
}

/// Next move toward `plan`, or `Done` when the plan stands.
pub fn next_build_action(plan: &BuildPlan, view: &StateView) -> ActionKind {
    if let Some(held) = view.holding {
        if let Some((ti, p)) = plan.locate(held) {
            let tower = &plan.towers[ti];
            if p > 0 && view.towers.iter().any(|s| s[..] == tower[..p]) {
                return ActionKind::Stack { top: held, bottom: tower[p - 1] };
            }
        }
        return ActionKind::PutDown { block: held };
    }
    if plan.is_complete(view) {
        return ActionKind::Done;
    }
    if let Some(wrong) = view.towers.iter().find(|s| s.len() >= 2 && !plan.is_prefix(s)) {
        return ActionKind::PickUp { block: *wrong.last().expect("non-empty stack") };
    }
    for tower in &plan.towers {
        let built = view
            .towers
            .iter()
            .filter(|s| s.len() <= tower.len() && tower[..s.len()] == s[..])
            .map(|s| s.len())
            .max()
            .unwrap_or(0);
        if built < tower.len() {
            return ActionKind::PickUp { block: tower[built] };
        }
    }
    // Every tower is built, yet the view differs: a stray stack exists.
    match view.towers.iter().find(|s| !plan.towers.contains(s)) {
        Some(s) => ActionKind::PickUp { block: *s.last().expect("non-empty stack") },
        None => ActionKind::Done,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{apply_action, Action, AllowedActions, DistractionCorpus, EnvConfig, NoiseConfig, StopRule, WorldState};
    use proptest::prelude::*;

    fn config(noise: NoiseConfig) -> EnvConfig {
        EnvConfig {
            noise,
            stop: StopRule::Done,
            allowed: AllowedActions { measure: false, manipulate: true, towers: false, height: false },
            collapse: None,
        }
    }

    fn build(n: usize, mask: u32, seed: u64, noise: NoiseConfig) -> (WorldState, u32) {
        let c = Configuration::from_mask(n, mask).unwrap();
        let plan = BuildPlan::from_configuration(&c);
        let mut state = WorldState::from_seed(n, seed).unwrap();
        let corpus = DistractionCorpus::default();
        let mut steps = 0;
        while !state.is_terminal() {
            let kind = next_build_action(&plan, state.view());
            apply_action(&mut state, &Action::new(kind), &config(noise), &corpus).unwrap();
            steps += 1;
            assert!(steps < 500, "builder did not converge");
        }
        assert!(plan.is_complete(state.view()));
        (state, steps)
    }

    #[test]
    fn builds_every_three_block_configuration_without_noise() {
        for mask in [0b001, 0b011, 0b101] {
            let (_, steps) = build(3, mask, 1, NoiseConfig::NONE);
            // Two moves per stacked block plus done.
            assert!(steps <= 5);
        }
    }

    #[test]
    fn single_tower_plan() {
        let plan = BuildPlan::single_tower(3);
        let a = BlockId::from_index(0);
        let b = BlockId::from_index(1);
        let c = BlockId::from_index(2);
        let view = StateView { towers: vec![vec![a], vec![b], vec![c]], holding: None };
        assert_eq!(next_build_action(&plan, &view), ActionKind::PickUp { block: b });
        let view = StateView { towers: vec![vec![a], vec![c]], holding: Some(b) };
        assert_eq!(next_build_action(&plan, &view), ActionKind::Stack { top: b, bottom: a });
    }

    #[test]
    fn dismantles_wrong_stacks_first() {
        let plan = BuildPlan::single_tower(3);
        let ids: Vec<BlockId> = (0..3).map(BlockId::from_index).collect();
        let view = StateView { towers: vec![vec![ids[1], ids[0]], vec![ids[2]]], holding: None };
        assert_eq!(next_build_action(&plan, &view), ActionKind::PickUp { block: ids[0] });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn converges_under_perturbation(n in 3usize..=6, raw in 1u32..32, seed in 0u64..1000) {
            let full = (1u32 << n) - 1;
            let mask = (raw & full).max(1);
            prop_assume!(mask != full);
            let (state, _) = build(n, mask, seed, NoiseConfig { perturbation: 0.2, distraction: 0.0 });
            prop_assert!(state.conserves_blocks());
        }
    }
}
