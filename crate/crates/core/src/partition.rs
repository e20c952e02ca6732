//! Two-tower configurations: enumeration, lowest-tower optimization,
//! partition distance, and distance-shell sampling.
//!
//! Blocks are indices `0..n`. A configuration is stored as the bitmask of
//! the tower holding block 0, which is the lexicographically smaller tower
//! and so doubles as the canonical form.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest block count handled by exhaustive routines.
pub const MAX_BLOCKS: usize = 20;

/// Largest block count for which [`ConfigSpace`] precomputes its distance table.
pub const MAX_SPACE_BLOCKS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("need at least 2 blocks for two towers, got {0}")]
    TooFewBlocks(usize),
    #[error("{0} blocks exceeds the exhaustive limit of {MAX_BLOCKS}")]
    TooManyBlocks(usize),
    #[error("both towers must be non-empty")]
    EmptyTower,
    #[error("block {0} is out of range for {1} blocks")]
    BlockOutOfRange(usize, usize),
    #[error("block {0} appears more than once")]
    DuplicateBlock(usize),
    #[error("block {0} is missing from the configuration")]
    MissingBlock(usize),
    #[error("expected exactly two towers, got {0}")]
    NotTwoTowers(usize),
    #[error("configurations cover different block counts ({0} vs {1})")]
    BlockCountMismatch(usize, usize),
    #[error("height map has {0} entries but configuration covers {1} blocks")]
    HeightCountMismatch(usize, usize),
}

/// An unordered split of blocks `0..n` into two non-empty towers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    n: u8,
    first: u32,
}

impl Configuration {
    /// Builds a configuration from the membership mask of either tower.
    pub fn from_mask(n: usize, mask: u32) -> Result<Self, PartitionError> {
        check_block_count(n)?;
        let full = full_mask(n);
        let mask = mask & full;
        if mask == 0 || mask == full {
            return Err(PartitionError::EmptyTower);
        }
        let first = if mask & 1 == 1 { mask } else { full & !mask };
        Ok(Self { n: n as u8, first })
    }

    /// Builds a configuration from two lists of block indices.
    pub fn from_towers<T: AsRef<[usize]>>(n: usize, towers: &[T]) -> Result<Self, PartitionError> {
        check_block_count(n)?;
        if towers.len() != 2 {
            return Err(PartitionError::NotTwoTowers(towers.len()));
        }
        let mut seen = 0u32;
        let mut first = 0u32;
        for (t, tower) in towers.iter().enumerate() {
            for &b in tower.as_ref() {
                if b >= n {
                    return Err(PartitionError::BlockOutOfRange(b, n));
                }
                let bit = 1u32 << b;
                if seen & bit != 0 {
                    return Err(PartitionError::DuplicateBlock(b));
                }
                seen |= bit;
                if t == 0 {
                    first |= bit;
                }
            }
        }
        if seen != full_mask(n) {
            let missing = (0..n).find(|b| seen & (1 << b) == 0).unwrap_or(0);
            return Err(PartitionError::MissingBlock(missing));
        }
        Self::from_mask(n, first)
    }

    pub fn block_count(&self) -> usize {
        self.n as usize
    }

    /// Mask of the tower containing block 0.
    pub fn first_mask(&self) -> u32 {
        self.first
    }

    pub fn second_mask(&self) -> u32 {
        full_mask(self.block_count()) & !self.first
    }

    /// The two towers as sorted index lists, canonical tower first.
    pub fn towers(&self) -> [Vec<usize>; 2] {
        let n = self.block_count();
        let a = (0..n).filter(|b| self.first & (1 << b) != 0).collect();
        let b = (0..n).filter(|b| self.first & (1 << b) == 0).collect();
        [a, b]
    }

    /// Tower heights in canonical order.
    pub fn tower_heights(&self, heights: &[f64]) -> [f64; 2] {
        let mut sums = [0.0; 2];
        for (b, h) in heights.iter().enumerate().take(self.block_count()) {
            if self.first & (1 << b) != 0 {
                sums[0] += h;
            } else {
                sums[1] += h;
            }
        }
        sums
    }

    /// Height of the lower tower.
    pub fn lowest_tower(&self, heights: &[f64]) -> f64 {
        let [a, b] = self.tower_heights(heights);
        a.min(b)
    }

    /// Height of the taller tower.
    pub fn highest_tower(&self, heights: &[f64]) -> f64 {
        let [a, b] = self.tower_heights(heights);
        a.max(b)
    }

    /// Formats with block labels `a`, `b`, ... as in `[a]; [b, c]`.
    pub fn label(&self) -> String {
        self.towers()
            .iter()
            .map(|t| {
                let names: Vec<String> = t.iter().map(|&b| block_letter(b).to_string()).collect();
                format!("[{}]", names.join(", "))
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn block_letter(b: usize) -> char {
    (b'a' + b as u8) as char
}

fn check_block_count(n: usize) -> Result<(), PartitionError> {
    if n < 2 {
        Err(PartitionError::TooFewBlocks(n))
    } else if n > MAX_BLOCKS {
        Err(PartitionError::TooManyBlocks(n))
    } else {
        Ok(())
    }
}

fn full_mask(n: usize) -> u32 {
    if n >= 32 {
        u32::MAX
    } else {
        (1u32 << n) - 1
    }
}

/// Number of two-tower configurations of `n` blocks: 2^(n−1) − 1.
pub fn configuration_count(n: usize) -> usize {
    (1usize << (n - 1)) - 1
}

/// All configurations of `n` blocks, in canonical enumeration order.
pub fn enumerate_configurations(n: usize) -> Result<Vec<Configuration>, PartitionError> {
    check_block_count(n)?;
    Ok((0..configuration_count(n))
        .map(|r| Configuration {
            n: n as u8,
            first: 1 | ((r as u32) << 1),
        })
        .collect())
}

/// Two-tower return: the height of the lower tower.
pub fn two_tower_return(config: &Configuration, heights: &[f64]) -> Result<f64, PartitionError> {
    if heights.len() != config.block_count() {
        return Err(PartitionError::HeightCountMismatch(heights.len(), config.block_count()));
    }
    Ok(config.lowest_tower(heights))
}

/// The configuration with the highest lowest tower. Ties go to the first in
/// enumeration order.
pub fn best_configuration(heights: &[f64]) -> Result<(Configuration, f64), PartitionError> {
    let configs = enumerate_configurations(heights.len())?;
    let mut best = configs[0];
    let mut best_value = best.lowest_tower(heights);
    for c in &configs[1..] {
        let v = c.lowest_tower(heights);
        if v > best_value {
            best = *c;
            best_value = v;
        }
    }
    Ok((best, best_value))
}

/// Every configuration whose lowest tower is within `tol` of the optimum.
pub fn optimal_configurations(heights: &[f64], tol: f64) -> Result<Vec<Configuration>, PartitionError> {
    let (_, best) = best_configuration(heights)?;
    Ok(enumerate_configurations(heights.len())?
        .into_iter()
        .filter(|c| c.lowest_tower(heights) >= best - tol)
        .collect())
}

/// Partition distance: the fewest single-block moves turning `a` into `b`,
/// minimized over the two ways of matching their towers.
pub fn distance(a: &Configuration, b: &Configuration) -> Result<u32, PartitionError> {
    if a.n != b.n {
        return Err(PartitionError::BlockCountMismatch(a.block_count(), b.block_count()));
    }
    Ok(raw_distance(a.n as u32, a.first, b.first))
}

fn raw_distance(n: u32, a: u32, b: u32) -> u32 {
    let x = (a ^ b).count_ones();
    x.min(n - x)
}

/// Distance from `config` to the nearest optimal configuration.
pub fn distance_to_optimum(config: &Configuration, heights: &[f64]) -> Result<u32, PartitionError> {
    if heights.len() != config.block_count() {
        return Err(PartitionError::HeightCountMismatch(heights.len(), config.block_count()));
    }
    let optima = optimal_configurations(heights, 1e-9)?;
    optima
        .iter()
        .map(|o| distance(config, o))
        .try_fold(u32::MAX, |acc, d| d.map(|d| acc.min(d)))
}

/// Blocks that must move to turn an arbitrary set of stacks into `target`.
///
/// Stacks are block masks; a built state with more than two stacks is scored
/// by matching the target's towers to two distinct stacks (or to nothing) and
/// counting every block outside its matched stack.
pub fn stacks_distance(stacks: &[u32], target: &Configuration) -> u32 {
    let n = target.block_count() as u32;
    let a = target.first_mask();
    let b = target.second_mask();
    // Index `stacks.len()` stands for an empty stack.
    let overlap = |i: usize, m: u32| -> u32 {
        if i == stacks.len() {
            0
        } else {
            (stacks[i] & m).count_ones()
        }
    };
    let mut best = 0;
    for i in 0..=stacks.len() {
        for j in 0..=stacks.len() {
            if i == j && i != stacks.len() {
                continue;
            }
            best = best.max(overlap(i, a) + overlap(j, b));
        }
    }
    n - best
}

/// Result of drawing from a distance shell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShellDraw {
    pub config: Configuration,
    /// Distance of the returned configuration from the origin.
    pub distance: u32,
    /// True when the requested shell was empty and a lower one was used.
    pub clamped: bool,
}

/// All configurations at exactly distance `d` from `origin`.
pub fn shell(origin: &Configuration, d: u32) -> Vec<Configuration> {
    enumerate_configurations(origin.block_count())
        .expect("origin has a valid block count")
        .into_iter()
        .filter(|c| raw_distance(origin.n as u32, origin.first, c.first) == d)
        .collect()
}

/// Uniform draw from the configurations at distance `d` from `origin`,
/// falling back to the nearest non-empty shell below `d`.
pub fn sample_at_distance<R: Rng + ?Sized>(origin: &Configuration, d: u32, rng: &mut R) -> ShellDraw {
    let mut target = d;
    loop {
        let members = shell(origin, target);
        if !members.is_empty() {
            let config = members[rng.random_range(0..members.len())];
            return ShellDraw { config, distance: target, clamped: target != d };
        }
        // Shell 0 always holds the origin, so this terminates.
        target -= 1;
    }
}

/// Precomputed configuration space for one block count: the enumeration
/// plus every distance shell, for fast repeated sampling.
#[derive(Clone, Debug)]
pub struct ConfigSpace {
    n: usize,
    configs: Vec<Configuration>,
    /// `shells[i][d]` lists indices at distance `d` from configuration `i`.
    shells: Vec<Vec<Vec<u32>>>,
}

impl ConfigSpace {
    pub fn new(n: usize) -> Result<Self, PartitionError> {
        if n > MAX_SPACE_BLOCKS {
            return Err(PartitionError::TooManyBlocks(n));
        }
        let configs = enumerate_configurations(n)?;
        let max_d = n / 2;
        let shells = configs
            .iter()
            .map(|o| {
                let mut by_d = vec![Vec::new(); max_d + 1];
                for (j, c) in configs.iter().enumerate() {
                    let d = raw_distance(n as u32, o.first, c.first) as usize;
                    by_d[d].push(j as u32);
                }
                by_d
            })
            .collect();
        Ok(Self { n, configs, shells })
    }

    pub fn block_count(&self) -> usize {
        self.n
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Index of a configuration in enumeration order.
    pub fn index_of(&self, c: &Configuration) -> usize {
        // Enumeration order is `first = 1 | (r << 1)`.
        (c.first >> 1) as usize
    }

    /// Same contract as [`sample_at_distance`], on enumeration indices.
    pub fn sample_at_distance<R: Rng + ?Sized>(&self, origin: usize, d: u32, rng: &mut R) -> (usize, bool) {
        let by_d = &self.shells[origin];
        let mut target = (d as usize).min(by_d.len() - 1);
        let mut clamped = target != d as usize;
        while by_d[target].is_empty() {
            target -= 1;
            clamped = true;
        }
        let members = &by_d[target];
        (members[rng.random_range(0..members.len())] as usize, clamped)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn cfg(n: usize, a: &[usize], b: &[usize]) -> Configuration {
        Configuration::from_towers(n, &[a.to_vec(), b.to_vec()]).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_configurations(2).unwrap().len(), 1);
        assert_eq!(enumerate_configurations(3).unwrap().len(), 3);
        assert_eq!(enumerate_configurations(5).unwrap().len(), 15);
        assert_eq!(enumerate_configurations(1), Err(PartitionError::TooFewBlocks(1)));
    }

    #[test]
    fn canonical_form_ignores_tower_order() {
        assert_eq!(cfg(3, &[0, 1], &[2]), cfg(3, &[2], &[1, 0]));
        assert_eq!(cfg(3, &[0, 1], &[2]).label(), "[a, b]; [c]");
    }

    #[test]
    fn rejects_malformed_towers() {
        assert_eq!(
            Configuration::from_towers(3, &[vec![0, 1, 2], vec![]]),
            Err(PartitionError::EmptyTower)
        );
        assert_eq!(
            Configuration::from_towers(3, &[vec![0, 1], vec![1, 2]]),
            Err(PartitionError::DuplicateBlock(1))
        );
        assert_eq!(
            Configuration::from_towers(3, &[vec![0], vec![1]]),
            Err(PartitionError::MissingBlock(2))
        );
    }

    #[test]
    fn two_tower_returns() {
        let h = [5.0, 7.0, 9.0];
        assert_eq!(two_tower_return(&cfg(3, &[0, 1], &[2]), &h).unwrap(), 9.0);
        assert_eq!(two_tower_return(&cfg(3, &[0, 2], &[1]), &h).unwrap(), 7.0);
        assert_eq!(two_tower_return(&cfg(3, &[1, 2], &[0]), &h).unwrap(), 5.0);
    }

    #[test]
    fn best_configuration_examples() {
        let (c, v) = best_configuration(&[5.0, 5.0, 10.0]).unwrap();
        assert_eq!(c, cfg(3, &[0, 1], &[2]));
        assert_eq!(v, 10.0);
        let (c, v) = best_configuration(&[5.0, 7.0, 9.0]).unwrap();
        assert_eq!(c, cfg(3, &[0, 1], &[2]));
        assert_eq!(v, 9.0);
    }

    #[test]
    fn single_move_distance_example() {
        let a = cfg(3, &[0, 1], &[2]);
        let b = cfg(3, &[0], &[1, 2]);
        assert_eq!(distance(&a, &b).unwrap(), 1);
        assert_eq!(distance(&a, &a).unwrap(), 0);
    }

    #[test]
    fn stacks_distance_matches_partition_distance_on_two_stacks() {
        let built = cfg(3, &[0, 1], &[2]);
        let requested = cfg(3, &[0], &[1, 2]);
        let stacks = [built.first_mask(), built.second_mask()];
        assert_eq!(stacks_distance(&stacks, &requested), 1);
        // Three singletons: one block must move onto another.
        assert_eq!(stacks_distance(&[1, 2, 4], &requested), 1);
        // Everything in one stack: the smaller tower has to leave.
        assert_eq!(stacks_distance(&[7], &requested), 1);
    }

    #[test]
    fn shell_sampling_zero_is_origin() {
        let mut rng = stream_rng(1, 1);
        let o = cfg(4, &[0, 1], &[2, 3]);
        let draw = sample_at_distance(&o, 0, &mut rng);
        assert_eq!(draw.config, o);
        assert!(!draw.clamped);
    }

    #[test]
    fn shell_sampling_clamps_empty_shells() {
        let mut rng = stream_rng(1, 1);
        let o = cfg(2, &[0], &[1]);
        let draw = sample_at_distance(&o, 1, &mut rng);
        assert_eq!(draw.config, o);
        assert!(draw.clamped);
        let o3 = cfg(3, &[0], &[1, 2]);
        let draw = sample_at_distance(&o3, 5, &mut rng);
        assert_eq!(draw.distance, 1);
        assert!(draw.clamped);
    }

    #[test]
    fn distance_one_draw_lies_in_enumerated_shell() {
        let mut rng = stream_rng(2, 1);
        let o = cfg(3, &[0, 1], &[2]);
        let members = shell(&o, 1);
        assert_eq!(members.len(), 2);
        for _ in 0..50 {
            let draw = sample_at_distance(&o, 1, &mut rng);
            assert!(members.contains(&draw.config));
        }
    }

    #[test]
    fn config_space_agrees_with_free_functions() {
        for n in 2..=6 {
            let space = ConfigSpace::new(n).unwrap();
            for (i, o) in space.configs().iter().enumerate() {
                assert_eq!(space.index_of(o), i);
                for d in 0..=(n as u32) {
                    let mut r1 = stream_rng(9, d as u64);
                    let mut r2 = stream_rng(9, d as u64);
                    let free = sample_at_distance(o, d, &mut r1);
                    let (j, clamped) = space.sample_at_distance(i, d, &mut r2);
                    assert_eq!(free.config, space.configs()[j]);
                    assert_eq!(free.clamped, clamped);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn best_dominates_every_configuration(heights in proptest::collection::vec(5.0f64..10.0, 2..8)) {
            let (_, best) = best_configuration(&heights).unwrap();
            for c in enumerate_configurations(heights.len()).unwrap() {
                prop_assert!(best >= c.lowest_tower(&heights));
            }
        }

        #[test]
        fn shell_draws_hit_requested_or_clamped_distance(n in 2usize..7, first in 0u32..64, d in 0u32..5, seed in 0u64..1000) {
            let full = (1u32 << n) - 1;
            prop_assume!((first & full) != 0 && (first & full) != full);
            let o = Configuration::from_mask(n, first).unwrap();
            let mut rng = stream_rng(seed, 0);
            let draw = sample_at_distance(&o, d, &mut rng);
            let max_nonempty = (0..=d).rev().find(|&k| !shell(&o, k).is_empty()).unwrap();
            prop_assert_eq!(distance(&o, &draw.config).unwrap(), max_nonempty);
        }
    }
}
