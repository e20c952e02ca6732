//! Goal-directedness point estimates and stratified bootstrap intervals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, ExecMode};
use crate::mc::ReturnSamples;
use crate::rng::derive_seed;

/// |mean(r_star) − mean(r_zero)| below this makes GD undefined.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-9;
pub const DEFAULT_REPLICATES: usize = 2000;
pub const MIN_REPLICATES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty {0} sample set")]
    Empty(&'static str),
    #[error(
        "GD undefined: optimum mean {star:.6} and baseline mean {zero:.6} coincide (difference {:.3e})",
        star - zero
    )]
    Degenerate { star: f64, zero: f64 },
    #[error("no stratum has a defined GD")]
    NoStrata,
    #[error("bootstrap needs at least {MIN_REPLICATES} replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// (π − π0) / (π* − π0) on sample means. Negative below the baseline,
/// above 1 past the estimated optimum; never clamped.
pub fn gd_from_means(pi: f64, star: f64, zero: f64) -> Result<f64, StatsError> {
    let denom = star - zero;
    if denom.abs() < DEGENERATE_DENOMINATOR || !denom.is_finite() {
        return Err(StatsError::Degenerate { star, zero });
    }
    Ok((pi - zero) / denom)
}

pub fn gd_from_sets(r_pi: &[f64], r_star: &[f64], r_zero: &[f64]) -> Result<f64, StatsError> {
    for (name, xs) in [("r_pi", r_pi), ("r_star", r_star), ("r_zero", r_zero)] {
        if xs.is_empty() {
            return Err(StatsError::Empty(name));
        }
    }
    gd_from_means(mean(r_pi), mean(r_star), mean(r_zero))
}

pub fn gd(samples: &ReturnSamples) -> Result<f64, StatsError> {
    gd_from_sets(&samples.r_pi, &samples.r_star, &samples.r_zero)
}

/// Per-stratum GD and their unweighted mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub per_stratum: BTreeMap<usize, f64>,
    pub aggregate: f64,
    /// Strata left out because their GD is undefined.
    pub dropped: Vec<usize>,
}

/// Degenerate strata are dropped with a warning; an error only when none
/// is left.
pub fn aggregate_gd(strata: &BTreeMap<usize, ReturnSamples>) -> Result<Aggregate, StatsError> {
    let mut per_stratum = BTreeMap::new();
    let mut dropped = Vec::new();
    for (&n, s) in strata {
        match gd(s) {
            Ok(g) => {
                per_stratum.insert(n, g);
            }
            Err(e) => {
                log::warn!("{} at {n} blocks dropped from the aggregate: {e}", s.task);
                dropped.push(n);
            }
        }
    }
    if per_stratum.is_empty() {
        return Err(StatsError::NoStrata);
    }
    let aggregate = per_stratum.values().sum::<f64>() / per_stratum.len() as f64;
    Ok(Aggregate { per_stratum, aggregate, dropped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub mode: ExecMode,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self { replicates: DEFAULT_REPLICATES, alpha: 0.05, seed: 0, mode: ExecMode::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    /// Mean of the replicate aggregates.
    pub mean: f64,
    /// Replicates with a defined aggregate.
    pub replicates: usize,
}

fn resampled_mean<R: Rng + ?Sized>(xs: &[f64], rng: &mut R) -> f64 {
    let n = xs.len();
    (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
}

/// Endpoints are order statistics of the replicate list:
/// `sorted[⌊B·α/2⌋]` and `sorted[⌈B·(1−α/2)⌉ − 1]`.
pub fn percentile_interval(replicates: &mut [f64], alpha: f64) -> (f64, f64) {
    replicates.sort_by(f64::total_cmp);
    let b = replicates.len();
    let lo = ((b as f64 * alpha / 2.0).floor() as usize).min(b - 1);
    let hi = ((b as f64 * (1.0 - alpha / 2.0)).ceil() as usize).clamp(1, b) - 1;
    (replicates[lo], replicates[hi])
}

/// Within each stratum, r_pi, r_star and r_zero are resampled with
/// replacement independently; each replicate yields one aggregate GD.
pub fn bootstrap_ci(
    strata: &BTreeMap<usize, ReturnSamples>,
    opts: &BootstrapOptions,
) -> Result<BootstrapInterval, StatsError> {
    if opts.replicates < MIN_REPLICATES {
        return Err(StatsError::TooFewReplicates(opts.replicates));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(StatsError::BadAlpha(opts.alpha));
    }
    // Strata without a defined point estimate stay out of every replicate.
    let usable: Vec<&ReturnSamples> = strata.values().filter(|s| gd(s).is_ok()).collect();
    if usable.is_empty() {
        return Err(StatsError::NoStrata);
    }
    let reps = map_indexed(opts.mode, opts.replicates, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[opts.seed, i as u64]));
        let gds: Vec<f64> = usable
            .iter()
            .filter_map(|s| {
                let pi = resampled_mean(&s.r_pi, &mut rng);
                let star = resampled_mean(&s.r_star, &mut rng);
                let zero = resampled_mean(&s.r_zero, &mut rng);
                gd_from_means(pi, star, zero).ok()
            })
            .collect();
        (!gds.is_empty()).then(|| gds.iter().sum::<f64>() / gds.len() as f64)
    });
    let mut reps: Vec<f64> = reps.into_iter().flatten().collect();
    if reps.is_empty() {
        return Err(StatsError::NoStrata);
    }
    let boot_mean = mean(&reps);
    let (low, high) = percentile_interval(&mut reps, opts.alpha);
    Ok(BootstrapInterval { low, high, mean: boot_mean, replicates: reps.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GDEstimate {
    pub per_stratum: BTreeMap<usize, f64>,
    /// Plug-in estimate on the un-resampled data.
    pub aggregate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap_mean: f64,
    pub replicates: usize,
    /// Observed runs per stratum.
    pub sample_sizes: BTreeMap<usize, usize>,
    pub dropped: Vec<usize>,
}

pub fn estimate_gd(
    strata: &BTreeMap<usize, ReturnSamples>,
    opts: &BootstrapOptions,
) -> Result<GDEstimate, StatsError> {
    let agg = aggregate_gd(strata)?;
    let ci = bootstrap_ci(strata, opts)?;
    Ok(GDEstimate {
        per_stratum: agg.per_stratum,
        aggregate: agg.aggregate,
        ci_low: ci.low,
        ci_high: ci.high,
        bootstrap_mean: ci.mean,
        replicates: ci.replicates,
        sample_sizes: strata.iter().map(|(&n, s)| (n, s.r_pi.len())).collect(),
        dropped: agg.dropped,
    })
}
