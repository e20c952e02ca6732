use std::collections::BTreeMap;

use approx::assert_relative_eq;
use goaldir_core::exec::ExecMode;
use goaldir_core::mc::ReturnSamples;
use goaldir_core::stats::{
    aggregate_gd, bootstrap_ci, estimate_gd, gd, gd_from_means, gd_from_sets, percentile_interval,
    BootstrapOptions, StatsError,
};
use goaldir_core::tasks::TaskId;
use proptest::prelude::*;

fn samples(n: usize, pi: Vec<f64>, star: Vec<f64>, zero: Vec<f64>) -> ReturnSamples {
    ReturnSamples {
        task: TaskId::CognitiveEffort,
        n_blocks: n,
        iterations: star.len(),
        r_pi: pi,
        r_star: star,
        r_zero: zero,
        m_clamped: 0,
        shell_clamped: 0,
    }
}

#[test]
fn anchor_values() {
    assert_eq!(gd_from_means(14.0, 16.0, 12.0).unwrap(), 0.5);
    assert_eq!(gd_from_means(12.0, 16.0, 12.0).unwrap(), 0.0);
    assert_eq!(gd_from_means(16.0, 16.0, 12.0).unwrap(), 1.0);
    assert!(gd_from_means(10.0, 16.0, 12.0).unwrap() < 0.0);
    assert_eq!(gd_from_sets(&[13.0, 15.0], &[15.0, 17.0], &[12.0]).unwrap(), 0.5);
}

#[test]
fn degenerate_denominator_is_an_error() {
    assert!(matches!(gd_from_means(1.0, 5.0, 5.0), Err(StatsError::Degenerate { .. })));
    assert!(matches!(gd_from_sets(&[], &[1.0], &[0.0]), Err(StatsError::Empty(_))));
}

#[test]
fn aggregate_is_the_unweighted_stratum_mean_and_drops_degenerate_strata() {
    let mut strata = BTreeMap::new();
    strata.insert(3, samples(3, vec![14.0; 30], vec![16.0], vec![12.0]));
    strata.insert(4, samples(4, vec![16.0; 2], vec![16.0], vec![12.0]));
    strata.insert(5, samples(5, vec![1.0], vec![7.0], vec![7.0]));
    let agg = aggregate_gd(&strata).unwrap();
    assert_relative_eq!(agg.aggregate, 0.75);
    assert_eq!(agg.dropped, vec![5]);
    assert_eq!(gd(&strata[&3]).unwrap(), 0.5);
}

#[test]
fn percentile_endpoints_are_order_statistics() {
    let mut reps: Vec<f64> = (0..2000).rev().map(f64::from).collect();
    // ⌊2000·0.025⌋ = 50 and ⌈2000·0.975⌉ − 1 = 1949.
    assert_eq!(percentile_interval(&mut reps, 0.05), (50.0, 1949.0));
}

#[test]
fn bootstrap_is_reproducible_and_mode_independent() {
    let mut strata = BTreeMap::new();
    let wave = |k: usize, c: f64| (0..k).map(|i| c + (i as f64 * 0.37).sin()).collect::<Vec<_>>();
    strata.insert(3, samples(3, wave(30, 13.0), wave(500, 16.0), wave(500, 11.0)));
    strata.insert(4, samples(4, wave(25, 14.0), wave(500, 17.0), wave(500, 12.0)));
    let seq = BootstrapOptions { mode: ExecMode::Sequential, seed: 4, ..BootstrapOptions::default() };
    let par = BootstrapOptions { mode: ExecMode::Parallel, ..seq };
    let a = bootstrap_ci(&strata, &seq).unwrap();
    assert_eq!(a, bootstrap_ci(&strata, &par).unwrap());
    assert!(a.low <= a.high);
    let e = estimate_gd(&strata, &seq).unwrap();
    assert_eq!(e.sample_sizes[&3], 30);
    assert!(e.ci_low <= e.aggregate && e.aggregate <= e.ci_high);
}

#[test]
fn too_few_replicates_are_rejected() {
    let mut strata = BTreeMap::new();
    strata.insert(3, samples(3, vec![14.0], vec![16.0], vec![12.0]));
    let opts = BootstrapOptions { replicates: 999, ..BootstrapOptions::default() };
    assert!(matches!(bootstrap_ci(&strata, &opts), Err(StatsError::TooFewReplicates(999))));
}

proptest! {
    #[test]
    fn gd_is_affine_invariant(pi in 0.0f64..20.0, star in 0.0f64..20.0, zero in 0.0f64..20.0, a in 0.1f64..10.0, b in -10.0f64..10.0) {
        prop_assume!((star - zero).abs() > 1e-3);
        let g = gd_from_means(pi, star, zero).unwrap();
        let h = gd_from_means(a * pi + b, a * star + b, a * zero + b).unwrap();
        prop_assert!((g - h).abs() < 1e-6 * (1.0 + g.abs()));
    }

    #[test]
    fn interval_is_ordered(xs in prop::collection::vec(-5.0f64..5.0, 1..300), alpha in 0.01f64..0.5) {
        let mut v = xs.clone();
        let (lo, hi) = percentile_interval(&mut v, alpha);
        prop_assert!(lo <= hi);
        prop_assert!(xs.contains(&lo) && xs.contains(&hi));
    }
}
