//! Completely randomized allocation of actions to stages, and the
//! constrained re-randomization used by the randomization test.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ActionSequence;

/// Default ceiling on exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// `n_q = ⌊T/(Q+1)⌋` for every signal, remainder to the control arm.
pub fn balanced_counts(stages: usize, signals: usize) -> Result<Vec<usize>> {
    let per = stages / (signals + 1);
    if per == 0 {
        return Err(Error::Config(format!(
            "{stages} stages cannot give each of {} actions a stage",
            signals + 1
        )));
    }
    let mut counts = vec![per; signals + 1];
    counts[0] = stages - per * signals;
    Ok(counts)
}

/// Uniform draw over all sequences with `counts[q]` copies of action `q`.
pub fn randomize_allocation(stages: usize, counts: &[usize], rng: &mut impl Rng) -> Result<ActionSequence> {
    if counts.is_empty() {
        return Err(Error::Allocation("no actions".into()));
    }
    if counts.contains(&0) {
        return Err(Error::Allocation("every action needs at least one stage".into()));
    }
    if counts.iter().sum::<usize>() != stages {
        return Err(Error::Allocation(format!(
            "counts sum to {}, expected {stages}",
            counts.iter().sum::<usize>()
        )));
    }
    let mut actions: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(q, &c)| std::iter::repeat_n(q, c))
        .collect();
    actions.shuffle(rng);
    ActionSequence::new(actions, counts.len() - 1)
}

/// Stage indices (0-based) whose action is 0 or `q`, in order.
pub fn pooled_positions(d: &ActionSequence, q: usize) -> Result<Vec<usize>> {
    if q == 0 || q > d.signals() {
        return Err(Error::ActionOutOfRange { action: q, signals: d.signals() });
    }
    if d.count(q) == 0 {
        return Err(Error::MissingAction(q));
    }
    if d.count(0) == 0 {
        return Err(Error::MissingAction(0));
    }
    Ok(d.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == 0 || a == q)
        .map(|(t, _)| t)
        .collect())
}

/// Shuffle the 0/q labels among their own positions; every other stage
/// keeps its action.
pub fn permute_for_test(d_obs: &ActionSequence, q: usize, rng: &mut impl Rng) -> Result<ActionSequence> {
    let positions = pooled_positions(d_obs, q)?;
    let mut labels: Vec<usize> = positions.iter().map(|&t| d_obs.as_slice()[t]).collect();
    labels.shuffle(rng);
    let mut actions = d_obs.as_slice().to_vec();
    for (&t, &a) in positions.iter().zip(&labels) {
        actions[t] = a;
    }
    Ok(ActionSequence::from_raw(actions, d_obs.signals()))
}

/// `C(n, k)` as a float; exact for the sizes the cap admits.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Number of distinct constrained permutations for testing signal `q`.
pub fn permutation_count(d: &ActionSequence, q: usize) -> Result<f64> {
    pooled_positions(d, q)?;
    Ok(binomial(d.count(0) + d.count(q), d.count(q)))
}

/// Visit every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All distinct constrained permutations of `d_obs` for signal `q`.
pub fn enumerate_permutations(d_obs: &ActionSequence, q: usize, cap: u64) -> Result<Vec<ActionSequence>> {
    let positions = pooled_positions(d_obs, q)?;
    let n_q = d_obs.count(q);
    let count = binomial(positions.len(), n_q);
    if count > cap as f64 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    for_each_combination(positions.len(), n_q, |chosen| {
        let mut actions = d_obs.as_slice().to_vec();
        for &t in &positions {
            actions[t] = 0;
        }
        for &c in chosen {
            actions[positions[c]] = q;
        }
        out.push(ActionSequence::from_raw(actions, d_obs.signals()));
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use std::collections::{BTreeMap, BTreeSet};

    fn seq(a: &[usize], q: usize) -> ActionSequence {
        ActionSequence::new(a.to_vec(), q).unwrap()
    }

    #[test]
    fn balanced_counts_give_remainder_to_control() {
        assert_eq!(balanced_counts(200, 5).unwrap(), vec![35, 33, 33, 33, 33, 33]);
        assert_eq!(balanced_counts(6, 2).unwrap(), vec![2, 2, 2]);
        assert!(balanced_counts(3, 5).is_err());
    }

    #[test]
    fn allocation_respects_counts() {
        let mut rng = rng_for(1, &[]);
        let d = randomize_allocation(10, &[4, 3, 3], &mut rng).unwrap();
        assert_eq!(d.counts(), vec![4, 3, 3]);
    }

    #[test]
    fn all_control_allocation() {
        let mut rng = rng_for(1, &[]);
        let d = randomize_allocation(5, &[5], &mut rng).unwrap();
        assert_eq!(d.as_slice(), &[0, 0, 0, 0, 0]);
    }

    #[test]
    fn allocation_rejects_bad_counts() {
        let mut rng = rng_for(1, &[]);
        assert!(randomize_allocation(4, &[2, 1], &mut rng).is_err());
        assert!(randomize_allocation(3, &[3, 0], &mut rng).is_err());
    }

    #[test]
    fn three_singletons_reach_all_six_orderings() {
        let mut rng = rng_for(2, &[]);
        let mut seen = BTreeMap::new();
        for _ in 0..6000 {
            let d = randomize_allocation(3, &[1, 1, 1], &mut rng).unwrap();
            *seen.entry(d.as_slice().to_vec()).or_insert(0usize) += 1;
        }
        assert_eq!(seen.len(), 6);
        for &c in seen.values() {
            assert!((800..1200).contains(&c), "{seen:?}");
        }
    }

    #[test]
    fn three_labels_give_three_permutations() {
        let d = seq(&[0, 1, 2, 1], 2);
        let all = enumerate_permutations(&d, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        let got: BTreeSet<Vec<usize>> = all.iter().map(|s| s.as_slice().to_vec()).collect();
        let want: BTreeSet<Vec<usize>> = [vec![0, 1, 2, 1], vec![1, 0, 2, 1], vec![1, 1, 2, 0]].into();
        assert_eq!(got, want);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn two_stage_enumeration() {
        let d = seq(&[0, 1], 1);
        let all = enumerate_permutations(&d, 1, 10).unwrap();
        let got: BTreeSet<Vec<usize>> = all.iter().map(|s| s.as_slice().to_vec()).collect();
        assert_eq!(got, [vec![0, 1], vec![1, 0]].into());
    }

    #[test]
    fn enumeration_count_is_binomial() {
        let d = seq(&[0, 1, 0, 1, 2], 2);
        assert_eq!(enumerate_permutations(&d, 1, 100).unwrap().len(), 6);
        let d = seq(&[0, 0, 0, 1, 1, 1, 2, 0, 1], 2);
        assert_eq!(enumerate_permutations(&d, 1, 1000).unwrap().len(), binomial(8, 4) as usize);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let d = seq(&[0, 1, 0, 1, 0, 1], 1);
        assert!(matches!(enumerate_permutations(&d, 1, 19), Err(Error::EnumerationCap { .. })));
        assert_eq!(enumerate_permutations(&d, 1, 20).unwrap().len(), 20);
    }

    #[test]
    fn permutation_keeps_other_actions_in_place() {
        let d = seq(&[0, 1, 2, 1], 2);
        let mut rng = rng_for(3, &[]);
        let mut reached = BTreeSet::new();
        for _ in 0..200 {
            let p = permute_for_test(&d, 1, &mut rng).unwrap();
            assert_eq!(p.as_slice()[2], 2);
            reached.insert(p.as_slice().to_vec());
            let p2 = permute_for_test(&d, 2, &mut rng).unwrap();
            assert_eq!(p2.as_slice()[1], 1);
            assert_eq!(p2.as_slice()[3], 1);
        }
        assert_eq!(reached.len(), 3);
    }

    #[test]
    fn permutation_requires_the_signal() {
        let d = ActionSequence::unchecked(vec![0, 0, 2], 2).unwrap();
        let mut rng = rng_for(3, &[]);
        assert!(matches!(permute_for_test(&d, 1, &mut rng), Err(Error::MissingAction(1))));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(20, 10), 184_756.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
