use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;

use bodydisc_core::design::{
    binomial, enumerate_permutations, permute_for_test, randomize_allocation, DEFAULT_ENUMERATION_CAP,
};
use bodydisc_core::evaluation::{average_precision, confusion, metrics};
use bodydisc_core::inference::oracle::{oracle_true_effect, oracle_variance, PotentialOutcomes};
use bodydisc_core::inference::{
    decide_body, diff_in_means, frt_p_value_exact, frt_p_value_monte_carlo, Correction, TestRow,
};
use bodydisc_core::model::{accumulate, shortest_angle, stage_delta, FeatureKind, FeatureValue, WorldSnapshot};
use bodydisc_core::seed::rng_for;
use bodydisc_core::ActionSequence;

const LEVELS: u32 = 5;

fn kinds() -> Vec<FeatureKind> {
    vec![
        FeatureKind::Rotation,
        FeatureKind::Position2D,
        FeatureKind::Position3D,
        FeatureKind::DiscreteState { levels: LEVELS },
    ]
}

fn cell() -> impl Strategy<Value = (f64, [f64; 2], [f64; 3], u32)> {
    (
        0.0..std::f64::consts::TAU,
        prop::array::uniform2(-50.0..50.0f64),
        prop::array::uniform3(-50.0..50.0f64),
        0..LEVELS,
    )
}

fn snapshots(objects: usize) -> impl Strategy<Value = Vec<WorldSnapshot>> {
    prop::collection::vec(prop::collection::vec(cell(), objects), 2..12).prop_map(|frames| {
        frames
            .into_iter()
            .enumerate()
            .map(|(t, row)| {
                let values = row
                    .into_iter()
                    .map(|(r, p2, p3, l)| {
                        vec![
                            Some(FeatureValue::Rotation(r)),
                            Some(FeatureValue::Position2D(p2)),
                            Some(FeatureValue::Position3D(p3)),
                            Some(FeatureValue::Discrete(l)),
                        ]
                    })
                    .collect();
                WorldSnapshot::new(t, kinds(), values).unwrap()
            })
            .collect()
    })
}

fn same_world(a: &WorldSnapshot, b: &WorldSnapshot) -> bool {
    a.rows().iter().flatten().zip(b.rows().iter().flatten()).all(|(x, y)| match (x, y) {
        (Some(FeatureValue::Rotation(p)), Some(FeatureValue::Rotation(q))) => shortest_angle(*p, *q).abs() < 1e-9,
        (Some(FeatureValue::Discrete(p)), Some(FeatureValue::Discrete(q))) => p == q,
        (Some(p), Some(q)) => p.components().iter().zip(q.components()).all(|(u, v)| (u - v).abs() < 1e-9),
        (None, None) => true,
        _ => false,
    })
}

/// An allocation with every action present at least `min` times.
fn allocation(signals: usize, min: usize, extra: usize) -> impl Strategy<Value = ActionSequence> {
    (prop::collection::vec(0..=signals, extra), any::<u64>()).prop_map(move |(more, seed)| {
        let mut counts = vec![min; signals + 1];
        for a in more {
            counts[a] += 1;
        }
        let stages = counts.iter().sum();
        randomize_allocation(stages, &counts, &mut rng_for(seed, &[])).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deltas_telescope_to_the_final_snapshot(frames in snapshots(3)) {
        let deltas: Vec<_> = frames.windows(2).map(|w| stage_delta(&w[0], &w[1]).unwrap()).collect();
        let end = accumulate(&deltas, &frames[0]).unwrap();
        prop_assert!(same_world(&end, frames.last().unwrap()));
    }

    #[test]
    fn identical_snapshots_have_zero_delta(frames in snapshots(2)) {
        let next = WorldSnapshot::new(1, kinds(), frames[0].rows().to_vec()).unwrap();
        prop_assert!(stage_delta(&frames[0], &next).unwrap().is_zero());
    }

    #[test]
    fn allocations_keep_their_counts(d in allocation(3, 1, 20)) {
        prop_assert!(d.counts().iter().all(|&c| c >= 1));
        prop_assert_eq!(d.counts().iter().sum::<usize>(), d.len());
    }

    #[test]
    fn permutations_only_move_the_tested_labels(d in allocation(3, 1, 12), seed in any::<u64>(), q in 1usize..=3) {
        let mut rng = rng_for(seed, &[]);
        let p = permute_for_test(&d, q, &mut rng).unwrap();
        prop_assert_eq!(p.counts(), d.counts());
        for (a, b) in d.as_slice().iter().zip(p.as_slice()) {
            if *a != 0 && *a != q {
                prop_assert_eq!(a, b);
            } else {
                prop_assert!(*b == 0 || *b == q);
            }
        }
    }

    #[test]
    fn enumeration_is_complete_and_distinct(d in allocation(2, 1, 8), q in 1usize..=2) {
        let all = enumerate_permutations(&d, q, DEFAULT_ENUMERATION_CAP).unwrap();
        let distinct: BTreeSet<Vec<usize>> = all.iter().map(|s| s.as_slice().to_vec()).collect();
        prop_assert_eq!(distinct.len(), all.len());
        prop_assert_eq!(all.len() as f64, binomial(d.count(0) + d.count(q), d.count(q)));
        prop_assert!(distinct.contains(d.as_slice()));
    }

    #[test]
    fn estimator_ignores_a_common_shift(d in allocation(2, 1, 10), shift in -100.0..100.0f64, seed in any::<u64>()) {
        let mut rng = rng_for(seed, &[]);
        let x: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        for q in 1..=2 {
            let a = diff_in_means(&x, &d, q).unwrap();
            let b = diff_in_means(&shifted, &d, q).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_p_is_invariant_to_affine_rescaling(
        d in allocation(2, 2, 8),
        scale in prop_oneof![-5.0..-0.2f64, 0.2..5.0f64],
        shift in -10.0..10.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_for(seed, &[]);
        let x: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        let p = frt_p_value_exact(&x, &d, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        let p2 = frt_p_value_exact(&y, &d, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        prop_assert_eq!(p, p2);
        // the observed labeling is one of the relabelings
        let count = binomial(d.count(0) + d.count(1), d.count(1));
        prop_assert!(p >= 1.0 / count - 1e-15 && p <= 1.0);
    }

    #[test]
    fn signal_labels_are_interchangeable(d in allocation(2, 2, 6), seed in any::<u64>()) {
        let mut rng = rng_for(seed, &[]);
        let x: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let swapped: Vec<usize> = d.as_slice().iter().map(|&a| match a { 1 => 2, 2 => 1, a => a }).collect();
        let e = ActionSequence::new(swapped, 2).unwrap();
        prop_assert_eq!(diff_in_means(&x, &d, 1).unwrap(), diff_in_means(&x, &e, 2).unwrap());
        prop_assert_eq!(
            frt_p_value_exact(&x, &d, 1, DEFAULT_ENUMERATION_CAP).unwrap(),
            frt_p_value_exact(&x, &e, 2, DEFAULT_ENUMERATION_CAP).unwrap()
        );
    }

    #[test]
    fn estimates_average_to_zero_over_all_relabelings(d in allocation(2, 1, 8), seed in any::<u64>()) {
        let mut rng = rng_for(seed, &[]);
        let x: Vec<f64> = (0..d.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let all = enumerate_permutations(&d, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        let mean = all.iter().map(|p| diff_in_means(&x, p, 1).unwrap()).sum::<f64>() / all.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn enumeration_matches_the_variance_formula(
        treated in prop::collection::vec(-5.0..5.0f64, 4..9),
        offsets in prop::collection::vec(-5.0..5.0f64, 9),
        n_q in 1usize..4,
    ) {
        let t = treated.len();
        prop_assume!(n_q < t);
        let control: Vec<f64> = treated.iter().zip(&offsets).map(|(a, o)| a - o).collect();
        let po = PotentialOutcomes::new(treated, control).unwrap();
        let mut base = vec![0usize; t];
        base[..n_q].fill(1);
        let d = ActionSequence::new(base, 1).unwrap();
        let est: Vec<f64> = enumerate_permutations(&d, 1, DEFAULT_ENUMERATION_CAP)
            .unwrap()
            .iter()
            .map(|p| diff_in_means(&po.observe(p, 1), p, 1).unwrap())
            .collect();
        let n = est.len() as f64;
        let mean = est.iter().sum::<f64>() / n;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((mean - oracle_true_effect(&po)).abs() < 1e-10);
        prop_assert!((var - oracle_variance(&po, n_q, t - n_q).unwrap().var_xi).abs() < 1e-9);
    }

    #[test]
    fn bonferroni_rejections_are_a_subset(ps in prop::collection::vec((0usize..8, 0.0..1.0f64), 1..60), alpha in 0.001..0.2f64) {
        let rows: Vec<TestRow> = ps
            .iter()
            .map(|&(object, p)| TestRow { object, feature: 0, signal: 1, xi_hat: 0.0, p_value: Some(p) })
            .collect();
        let plain = decide_body(&rows, 8, alpha, Correction::None, 1).unwrap();
        let bonf = decide_body(&rows, 8, alpha, Correction::Bonferroni, 1).unwrap();
        prop_assert!(bonf.body.is_subset(&plain.body));
        for (a, b) in plain.tests.iter().zip(&bonf.tests) {
            prop_assert!(!b.rejected || a.rejected);
        }
    }

    #[test]
    fn metrics_stay_in_the_unit_interval(
        n in 1usize..40,
        pred in prop::collection::btree_set(0usize..40, 0..40),
        truth in prop::collection::btree_set(0usize..40, 0..40),
    ) {
        let pred: BTreeSet<usize> = pred.into_iter().filter(|&i| i < n).collect();
        let truth: BTreeSet<usize> = truth.into_iter().filter(|&i| i < n).collect();
        let c = confusion(&pred, &truth, n).unwrap();
        prop_assert_eq!(c.total(), n);
        for v in metrics(&c).values().into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn perfect_prediction_is_all_ones(n in 2usize..40, s in prop::collection::btree_set(0usize..40, 1..39)) {
        let s: BTreeSet<usize> = s.into_iter().filter(|&i| i < n).collect();
        prop_assume!(!s.is_empty() && s.len() < n);
        let m = metrics(&confusion(&s, &s, n).unwrap());
        for v in &m.values()[..5] {
            prop_assert_eq!(*v, Some(1.0));
        }
    }

    #[test]
    fn complementing_swaps_recall_and_specificity(
        n in 2usize..30,
        pred in prop::collection::btree_set(0usize..30, 0..30),
        truth in prop::collection::btree_set(0usize..30, 0..30),
    ) {
        let all: BTreeSet<usize> = (0..n).collect();
        let pred: BTreeSet<usize> = pred.into_iter().filter(|&i| i < n).collect();
        let truth: BTreeSet<usize> = truth.into_iter().filter(|&i| i < n).collect();
        let m = metrics(&confusion(&pred, &truth, n).unwrap());
        let pc = all.difference(&pred).copied().collect();
        let tc = all.difference(&truth).copied().collect();
        let mc = metrics(&confusion(&pc, &tc, n).unwrap());
        prop_assert_eq!(m.recall, mc.specificity);
        prop_assert_eq!(m.specificity, mc.recall);
    }

    #[test]
    fn truth_ranked_first_gives_unit_ap(n in 1usize..30, k in 1usize..30, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let mut rng = rng_for(seed, &[]);
        let scores: Vec<f64> = (0..n).map(|i| if i < k { rng.random_range(0.0..0.4) } else { rng.random_range(0.5..1.0) }).collect();
        let truth: BTreeSet<usize> = (0..k).collect();
        prop_assert_eq!(average_precision(&scores, &truth).unwrap(), Some(1.0));
    }
}

#[test]
fn monte_carlo_p_stays_near_the_exact_p() {
    const M: usize = 1000;
    let mut rng = rng_for(91, &[]);
    let trials = 300;
    let mut inside = 0;
    for trial in 0..trials {
        let counts = [6, 6, 3];
        let d = randomize_allocation(15, &counts, &mut rng).unwrap();
        let shift = [0.0, 0.5, 1.0][trial % 3];
        let x: Vec<f64> = d
            .as_slice()
            .iter()
            .map(|&a| rng.random_range(-1.0..1.0) + if a == 1 { shift } else { 0.0 })
            .collect();
        let exact = frt_p_value_exact(&x, &d, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        let mc = frt_p_value_monte_carlo(&x, &d, 1, M, &mut rng_for(trial as u64, &[7])).unwrap();
        let bound = 3.0 * (exact * (1.0 - exact) / M as f64).sqrt();
        if (mc - exact).abs() < bound || mc == exact {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.99 * trials as f64, "{inside}/{trials}");
}

/// Expected AP of a uniformly random ranking, by enumerating every set of
/// positions the truth objects can occupy.
fn random_ranking_ap(n: usize, k: usize) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut hits = 0;
        let mut sum = 0.0;
        for rank in 0..n {
            if mask & (1 << rank) != 0 {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        total += sum / k as f64;
        count += 1;
    }
    total / count as f64
}

#[test]
fn random_scores_reach_the_expected_ap() {
    let (n, k, trials) = (8, 3, 10_000);
    let truth: BTreeSet<usize> = [1, 4, 6].into();
    let mut rng = rng_for(5, &[]);
    let aps: Vec<f64> = (0..trials)
        .map(|_| {
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            average_precision(&scores, &truth).unwrap().unwrap()
        })
        .collect();
    let mean = aps.iter().sum::<f64>() / trials as f64;
    let sd = (aps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
    let expected = random_ranking_ap(n, k);
    assert!((mean - expected).abs() < 4.0 * sd / (trials as f64).sqrt(), "{mean} vs {expected}");
    assert_abs_diff_eq!(random_ranking_ap(4, 1), (1.0 + 0.5 + 1.0 / 3.0 + 0.25) / 4.0, epsilon = 1e-15);
}
