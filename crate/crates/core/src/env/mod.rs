//! Seedable Blocksworld state machine.
//!
//! Blocks have hidden true heights. Agents observe noisy measurements, move
//! blocks between stacks, and declare answers. Optional channels perturb
//! manipulation actions and append distraction text to observations.

pub mod action;
pub mod corpus;
mod dynamics;
pub mod text;

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::partition::Configuration;
use crate::rng::{stream, stream_rng};

pub use action::{parse_action, Action, ActionKind, ParseFailure};
pub use corpus::DistractionCorpus;
pub use dynamics::{apply_action, legal_manipulations, maybe_distract, perturb_action};

pub const MIN_BLOCKS: usize = 3;
pub const MAX_BLOCKS: usize = 15;
pub const MIN_HEIGHT_CM: f64 = 5.0;
pub const MAX_HEIGHT_CM: f64 = 10.0;
/// Measurement standard deviation as a fraction of the true height.
pub const MEASUREMENT_NOISE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("block count {0} outside supported range {MIN_BLOCKS}..={MAX_BLOCKS}")]
    UnsupportedBlockCount(usize),
    #[error("there is no block named {0}")]
    UnknownBlock(BlockId),
    #[error("action applied to a terminal state")]
    Terminal,
    #[error("distraction probability is {0} but the corpus is empty")]
    EmptyCorpus(f64),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("block heights must be strictly positive")]
    NonPositiveHeight,
}

/// A block label: `a`, `b`, `c`, ...
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BlockId(u8);

impl BlockId {
    pub fn from_index(index: usize) -> Self {
        assert!(index < 26, "block index {index} has no letter");
        Self(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_letter(c: char) -> Option<Self> {
        let c = c.to_ascii_lowercase();
        c.is_ascii_lowercase().then(|| Self(c as u8 - b'a'))
    }

    /// Parses a single-letter block name.
    pub fn parse(s: &str) -> Option<Self> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_letter(c),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        (b'a' + self.0) as char
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl From<BlockId> for String {
    fn from(b: BlockId) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BlockId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        BlockId::parse(&s).ok_or_else(|| format!("invalid block name {s:?}"))
    }
}

/// The first `n` block labels.
pub fn block_ids(n: usize) -> Vec<BlockId> {
    (0..n).map(BlockId::from_index).collect()
}

/// Probabilities of the two noise channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Chance a manipulation action is replaced by a random legal one.
    pub perturbation: f64,
    /// Chance a distraction excerpt is appended to an observation.
    pub distraction: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig { perturbation: 0.0, distraction: 0.0 };
    /// 20% perturbation and 20% distraction.
    pub const STANDARD: NoiseConfig = NoiseConfig { perturbation: 0.2, distraction: 0.2 };

    pub fn validate(&self) -> Result<(), EnvError> {
        for p in [self.perturbation, self.distraction] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EnvError::BadProbability(p));
            }
        }
        Ok(())
    }
}

/// When an episode (or episode phase) ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// Some stack holds two blocks, or the agent is done.
    TwoBlockTowerOrDone,
    /// An accepted height or towers declaration, or done.
    Declaration,
    /// The agent declares it is done.
    Done,
    /// Done, or every configuration has been declared.
    DoneOrExhausted,
}

/// Action verbs accepted in a task. `done` is always accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllowedActions {
    pub measure: bool,
    pub manipulate: bool,
    pub towers: bool,
    pub height: bool,
}

impl AllowedActions {
    pub fn permits(&self, kind: &ActionKind) -> bool {
        match kind {
            ActionKind::Measure { .. } => self.measure,
            ActionKind::PickUp { .. } | ActionKind::Stack { .. } | ActionKind::PutDown { .. } => self.manipulate,
            ActionKind::Towers { .. } => self.towers,
            ActionKind::Height { .. } => self.height,
            ActionKind::Done => true,
        }
    }
}

/// A tower that falls once it grows past a threshold height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    pub threshold_cm: f64,
    pub max_collapses: u32,
}

/// Transition settings for one episode phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub noise: NoiseConfig,
    pub stop: StopRule,
    pub allowed: AllowedActions,
    pub collapse: Option<Collapse>,
}

/// What an agent can see of the world: stacks and the held block.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    /// Stacks bottom-first; a block alone on the table is a stack of one.
    pub towers: Vec<Vec<BlockId>>,
    pub holding: Option<BlockId>,
}

impl StateView {
    pub fn is_clear(&self, block: BlockId) -> bool {
        self.towers.iter().any(|t| t.last() == Some(&block))
    }

    pub fn stack_of(&self, block: BlockId) -> Option<usize> {
        self.towers.iter().position(|t| t.contains(&block))
    }

    /// Stacks as block masks, with a held block counted as its own stack.
    pub fn stack_masks(&self) -> Vec<u32> {
        let mut masks: Vec<u32> =
            self.towers.iter().map(|t| t.iter().fold(0u32, |m, b| m | (1 << b.index()))).collect();
        if let Some(h) = self.holding {
            masks.push(1 << h.index());
        }
        masks
    }

    /// Every pick up, stack and put down that is legal in this view.
    pub fn legal_manipulations(&self) -> Vec<ActionKind> {
        let tops = self.towers.iter().filter_map(|t| t.last().copied());
        match self.holding {
            Some(held) => std::iter::once(ActionKind::PutDown { block: held })
                .chain(tops.map(|bottom| ActionKind::Stack { top: held, bottom }))
                .collect(),
            None => tops.map(|block| ActionKind::PickUp { block }).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Outcome {
    /// Phase start; no action taken yet.
    Start,
    /// A manipulation or measurement changed or probed the world.
    Executed { action: ActionKind },
    /// A declaration was recorded.
    Declared { action: ActionKind },
    /// The action was illegal or unavailable; the world is unchanged.
    Rejected { reason: String },
}

/// The environment's reply to one action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub status: String,
    pub measurement: Option<(BlockId, f64)>,
    pub distraction: Option<String>,
    pub terminal: bool,
    pub view: StateView,
    pub outcome: Outcome,
    /// True when the perturbation channel replaced the agent's action.
    pub perturbed: bool,
    /// True when this action made the tower fall.
    pub collapsed: bool,
}

impl Observation {
    /// Observation shown before the first action.
    pub fn initial(status: String, view: StateView) -> Self {
        Self {
            status,
            measurement: None,
            distraction: None,
            terminal: false,
            view,
            outcome: Outcome::Start,
            perturbed: false,
            collapsed: false,
        }
    }
}

#[derive(Clone, Debug)]
struct Streams {
    measurement: ChaCha8Rng,
    perturbation: ChaCha8Rng,
    distraction: ChaCha8Rng,
}

/// Full environment state for one episode.
#[derive(Clone, Debug)]
pub struct WorldState {
    heights: Vec<f64>,
    view: StateView,
    step: u32,
    terminal: bool,
    collapses: u32,
    rebuilds: u32,
    declarations: Vec<ActionKind>,
    distinct_configs: Vec<Configuration>,
    measurements: Vec<u32>,
    streams: Streams,
}

impl WorldState {
    /// Samples `n` block heights from the episode seed's height stream and
    /// places every block on the table.
    pub fn from_seed(n: usize, seed: u64) -> Result<Self, EnvError> {
        let heights = sample_heights(n, &mut stream_rng(seed, stream::HEIGHTS))?;
        Self::with_heights(heights, seed)
    }

    /// Uses the given true heights; noise streams still come from `seed`.
    pub fn with_heights(heights: Vec<f64>, seed: u64) -> Result<Self, EnvError> {
        if heights.is_empty() || heights.len() > 26 {
            return Err(EnvError::UnsupportedBlockCount(heights.len()));
        }
        if heights.iter().any(|h| h.is_nan() || *h <= 0.0) {
            return Err(EnvError::NonPositiveHeight);
        }
        let n = heights.len();
        Ok(Self {
            view: StateView { towers: block_ids(n).into_iter().map(|b| vec![b]).collect(), holding: None },
            heights,
            step: 0,
            terminal: false,
            collapses: 0,
            rebuilds: 0,
            declarations: Vec::new(),
            distinct_configs: Vec::new(),
            measurements: vec![0; n],
            streams: Streams {
                measurement: stream_rng(seed, stream::MEASUREMENT),
                perturbation: stream_rng(seed, stream::PERTURBATION),
                distraction: stream_rng(seed, stream::DISTRACTION),
            },
        })
    }

    pub fn block_count(&self) -> usize {
        self.heights.len()
    }

    pub fn blocks(&self) -> Vec<BlockId> {
        block_ids(self.block_count())
    }

    /// True heights. Never shown to agents unless the task reveals them.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn height(&self, block: BlockId) -> Option<f64> {
        self.heights.get(block.index()).copied()
    }

    pub fn view(&self) -> &StateView {
        &self.view
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    /// Clears the terminal flag so a follow-up phase can continue the episode.
    pub fn resume(&mut self) {
        self.terminal = false;
    }

    pub fn collapses(&self) -> u32 {
        self.collapses
    }

    /// Collapses after which the agent stacked at least one more block.
    pub fn rebuilds(&self) -> u32 {
        self.rebuilds
    }

    pub fn declarations(&self) -> &[ActionKind] {
        &self.declarations
    }

    /// Distinct valid two-tower configurations declared so far.
    pub fn distinct_configs(&self) -> &[Configuration] {
        &self.distinct_configs
    }

    /// Measurements taken of each block.
    pub fn measurement_counts(&self) -> &[u32] {
        &self.measurements
    }

    pub fn contains(&self, block: BlockId) -> bool {
        block.index() < self.block_count()
    }

    /// Height of a stack in cm.
    pub fn stack_height(&self, stack: &[BlockId]) -> f64 {
        stack.iter().map(|b| self.heights[b.index()]).sum()
    }

    /// Every block appears exactly once across the stacks and the hand.
    pub fn conserves_blocks(&self) -> bool {
        let mut seen = vec![0u32; self.block_count()];
        for b in self.view.towers.iter().flatten().chain(self.view.holding.iter()) {
            match seen.get_mut(b.index()) {
                Some(c) => *c += 1,
                None => return false,
            }
        }
        seen.iter().all(|&c| c == 1) && self.view.towers.iter().all(|t| !t.is_empty())
    }
}

/// Draws `n` heights i.i.d. uniform on [5, 10] cm.
pub fn sample_heights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>, EnvError> {
    if !(MIN_BLOCKS..=MAX_BLOCKS).contains(&n) {
        return Err(EnvError::UnsupportedBlockCount(n));
    }
    Ok((0..n).map(|_| rng.random_range(MIN_HEIGHT_CM..MAX_HEIGHT_CM)).collect())
}

/// One noisy reading of a block: N(h, 0.1·h), rounded to 0.01 cm.
pub fn measure(state: &mut WorldState, block: BlockId) -> Result<f64, EnvError> {
    let h = state.height(block).ok_or(EnvError::UnknownBlock(block))?;
    let normal = Normal::new(h, MEASUREMENT_NOISE * h).expect("positive height gives valid sigma");
    let reading = normal.sample(&mut state.streams.measurement);
    state.measurements[block.index()] += 1;
    Ok(round_cm(reading))
}

/// Rounds to two decimals.
pub fn round_cm(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_heights_in_range() {
        let mut rng = stream_rng(11, stream::HEIGHTS);
        let h = sample_heights(3, &mut rng).unwrap();
        assert_eq!(h.len(), 3);
        assert!(h.iter().all(|&x| (5.0..=10.0).contains(&x)));
    }

    #[test]
    fn heights_reproducible() {
        let a = WorldState::from_seed(4, 99).unwrap();
        let b = WorldState::from_seed(4, 99).unwrap();
        assert_eq!(a.heights(), b.heights());
    }

    #[test]
    fn height_mean_matches_uniform() {
        let mut rng = stream_rng(3, stream::HEIGHTS);
        let mut sum = 0.0;
        let draws = 100_000 / 5;
        for _ in 0..draws {
            sum += sample_heights(5, &mut rng).unwrap().iter().sum::<f64>();
        }
        let mean = sum / 100_000.0;
        assert!((mean - 7.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn block_count_range() {
        let mut rng = stream_rng(0, 0);
        assert_eq!(sample_heights(2, &mut rng), Err(EnvError::UnsupportedBlockCount(2)));
        assert_eq!(sample_heights(16, &mut rng), Err(EnvError::UnsupportedBlockCount(16)));
        assert!(sample_heights(15, &mut rng).is_ok());
    }

    #[test]
    fn measurement_statistics() {
        let mut s = WorldState::with_heights(vec![8.0, 6.0, 7.0], 5).unwrap();
        let a = BlockId::from_index(0);
        let readings: Vec<f64> = (0..10_000).map(|_| measure(&mut s, a).unwrap()).collect();
        let mean = readings.iter().sum::<f64>() / readings.len() as f64;
        let var = readings.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (readings.len() - 1) as f64;
        assert!((mean - 8.0).abs() < 0.03, "mean {mean}");
        assert!((var.sqrt() - 0.8).abs() < 0.02 * 0.8, "std {}", var.sqrt());
        assert_eq!(s.measurement_counts(), &[10_000, 0, 0]);
    }

    #[test]
    fn unknown_block_measurement() {
        let mut s = WorldState::with_heights(vec![8.0, 6.0, 7.0], 5).unwrap();
        let z = BlockId::from_letter('z').unwrap();
        assert_eq!(measure(&mut s, z), Err(EnvError::UnknownBlock(z)));
    }

    #[test]
    fn block_id_serde_is_a_letter() {
        let b = BlockId::from_letter('c').unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "\"c\"");
        assert_eq!(serde_json::from_str::<BlockId>("\"c\"").unwrap(), b);
    }
}
