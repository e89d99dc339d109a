//! Difference-in-means estimation, Fisher randomization tests, Bonferroni
//! decisions and the normal-approximation baseline.
//!
//! Every `(object, feature, signal)` triple is tested on the scalar series
//! of observed stage deltas for that feature column. The test statistic is
//! `|ξ̂|` and the null distribution comes from re-randomizing the 0/q labels
//! while every other stage keeps its action.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::design::{binomial, pooled_positions, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::model::{feature_columns, stage_delta, ActionSequence, StageDelta, WorldSnapshot};
use crate::seed::rng_for;

/// Observed delta series for one feature column of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSeries {
    pub object: usize,
    pub feature: usize,
    /// `Δ_1 … Δ_T`.
    pub values: Vec<f64>,
}

/// Everything inference gets to see about the world: per-column delta
/// series of the *observed* snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub objects: usize,
    pub feature_labels: Vec<String>,
    pub series: Vec<DeltaSeries>,
}

impl DeltaTable {
    pub fn from_snapshots(observed: &[WorldSnapshot]) -> Result<Self> {
        let deltas = observed
            .windows(2)
            .map(|w| stage_delta(&w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        let first = observed.first().ok_or(Error::Empty("observed snapshots"))?;
        Self::from_deltas(first.objects(), first.kinds(), &deltas)
    }

    pub fn from_deltas(objects: usize, kinds: &[crate::model::FeatureKind], deltas: &[StageDelta]) -> Result<Self> {
        let columns = feature_columns(kinds);
        let feature_labels = columns.iter().map(|c| kinds[c.slot].axis_label(c.axis)).collect();
        let mut series = Vec::new();
        for object in 0..objects {
            for (feature, col) in columns.iter().enumerate() {
                let values: Option<Vec<f64>> = deltas
                    .iter()
                    .map(|d| d.get(object, col.slot).map(|v| v.component(col.axis)))
                    .collect();
                if let Some(values) = values {
                    if !values.is_empty() {
                        series.push(DeltaSeries { object, feature, values });
                    }
                }
            }
        }
        Ok(Self { objects, feature_labels, series })
    }

    pub fn stages(&self) -> usize {
        self.series.first().map_or(0, |s| s.values.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub object: usize,
    pub feature: usize,
    pub signal: usize,
    pub xi_hat: f64,
}

fn check_inputs(deltas: &[f64], d: &ActionSequence, q: usize) -> Result<()> {
    if deltas.len() != d.len() {
        return Err(Error::Structure(format!(
            "{} deltas for {} stages",
            deltas.len(),
            d.len()
        )));
    }
    if q == 0 || q > d.signals() {
        return Err(Error::ActionOutOfRange { action: q, signals: d.signals() });
    }
    for a in [q, 0] {
        if d.count(a) == 0 {
            return Err(Error::MissingAction(a));
        }
    }
    Ok(())
}

/// `ξ̂ = mean(Δ | D = q) − mean(Δ | D = 0)`.
pub fn diff_in_means(deltas: &[f64], d: &ActionSequence, q: usize) -> Result<f64> {
    check_inputs(deltas, d, q)?;
    let (mut sum_q, mut n_q, mut sum_0, mut n_0) = (0.0, 0usize, 0.0, 0usize);
    for (&delta, &a) in deltas.iter().zip(d.as_slice()) {
        if a == q {
            sum_q += delta;
            n_q += 1;
        } else if a == 0 {
            sum_0 += delta;
            n_0 += 1;
        }
    }
    Ok(sum_q / n_q as f64 - sum_0 / n_0 as f64)
}

/// Deltas of the stages carrying action 0 or `q`, plus arm sizes. The
/// statistic of any relabeling is a function of the sum over the stages
/// labeled `q`.
struct Pooled {
    values: Vec<f64>,
    total: f64,
    n_q: usize,
    n_0: usize,
    observed: f64,
    tolerance: f64,
}

impl Pooled {
    fn new(deltas: &[f64], d: &ActionSequence, q: usize) -> Result<Self> {
        check_inputs(deltas, d, q)?;
        let positions = pooled_positions(d, q)?;
        let values: Vec<f64> = positions.iter().map(|&t| deltas[t]).collect();
        let total = values.iter().sum();
        let observed = diff_in_means(deltas, d, q)?;
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        Ok(Pooled {
            values,
            total,
            n_q: d.count(q),
            n_0: d.count(0),
            observed,
            // ties up to rounding count as ties
            tolerance: 1e-9 * scale,
        })
    }

    fn statistic(&self, sum_q: f64) -> f64 {
        sum_q / self.n_q as f64 - (self.total - sum_q) / self.n_0 as f64
    }

    fn at_least_as_extreme(&self, stat: f64) -> bool {
        stat.abs() + self.tolerance >= self.observed.abs()
    }

    fn permutations(&self) -> f64 {
        binomial(self.values.len(), self.n_q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrtConfig {
    /// Monte Carlo draws M.
    pub mc_samples: usize,
    /// Enumerate exactly when the permutation count is at most this.
    pub exact_cap: u64,
}

impl Default for FrtConfig {
    fn default() -> Self {
        FrtConfig { mc_samples: 1000, exact_cap: DEFAULT_ENUMERATION_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FrtMode {
    Exact { permutations: u64 },
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrtOutcome {
    pub xi_hat: f64,
    pub p_value: f64,
    pub mode: FrtMode,
}

/// Exact randomization p-value over all `C(n_0 + n_q, n_q)` relabelings.
pub fn frt_p_value_exact(deltas: &[f64], d: &ActionSequence, q: usize, cap: u64) -> Result<f64> {
    let pooled = Pooled::new(deltas, d, q)?;
    exact_p(&pooled, cap)
}

fn exact_p(p: &Pooled, cap: u64) -> Result<f64> {
    let count = p.permutations();
    if count > cap as f64 {
        return Err(Error::EnumerationCap { count, cap });
    }
    let n = p.values.len();
    let k = p.n_q;
    // lexicographic k-subsets of 0..n, carrying the running sum of the
    // chosen values
    let mut idx: Vec<usize> = (0..k).collect();
    let mut partial = vec![0.0; k + 1];
    for i in 0..k {
        partial[i + 1] = partial[i] + p.values[idx[i]];
    }
    let mut hits: u64 = 0;
    let mut total: u64 = 0;
    loop {
        total += 1;
        if p.at_least_as_extreme(p.statistic(partial[k])) {
            hits += 1;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { break };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        for j in i..k {
            partial[j + 1] = partial[j] + p.values[idx[j]];
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Monte Carlo p-value `#{m : |ξ̂(D^(m))| ≥ |ξ̂_obs|} / M`, drawing the
/// relabelings with replacement.
pub fn frt_p_value_monte_carlo(
    deltas: &[f64],
    d: &ActionSequence,
    q: usize,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let pooled = Pooled::new(deltas, d, q)?;
    monte_carlo_p(&pooled, samples, rng)
}

fn monte_carlo_p(p: &Pooled, samples: usize, rng: &mut impl Rng) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Config("Monte Carlo needs at least one draw".into()));
    }
    let mut work = p.values.clone();
    let n = work.len();
    // draw whichever arm is smaller; the other is the complement
    let (k, draws_q) = if p.n_q <= p.n_0 { (p.n_q, true) } else { (p.n_0, false) };
    let mut hits = 0usize;
    for _ in 0..samples {
        // partial Fisher–Yates: the first k slots become a uniform k-subset
        let mut s = 0.0;
        for i in 0..k {
            let j = rng.random_range(i..n);
            work.swap(i, j);
            s += work[i];
        }
        let sum_q = if draws_q { s } else { p.total - s };
        if p.at_least_as_extreme(p.statistic(sum_q)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

/// Randomization test of the sharp null `Δ_t(q) = Δ_t(0)` for all `t`.
/// Enumerates exactly when feasible, otherwise samples `mc_samples`
/// relabelings.
pub fn frt_test(deltas: &[f64], d: &ActionSequence, q: usize, cfg: &FrtConfig, rng: &mut impl Rng) -> Result<FrtOutcome> {
    let pooled = Pooled::new(deltas, d, q)?;
    let count = pooled.permutations();
    if count <= cfg.exact_cap as f64 {
        Ok(FrtOutcome {
            xi_hat: pooled.observed,
            p_value: exact_p(&pooled, cfg.exact_cap)?,
            mode: FrtMode::Exact { permutations: count as u64 },
        })
    } else {
        Ok(FrtOutcome {
            xi_hat: pooled.observed,
            p_value: monte_carlo_p(&pooled, cfg.mc_samples, rng)?,
            mode: FrtMode::MonteCarlo { samples: cfg.mc_samples },
        })
    }
}

pub fn frt_p_value(deltas: &[f64], d: &ActionSequence, q: usize, samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let cfg = FrtConfig { mc_samples: samples, ..FrtConfig::default() };
    Ok(frt_test(deltas, d, q, &cfg, rng)?.p_value)
}

/// Estimate (and optionally p-value) for one test triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub object: usize,
    pub feature: usize,
    pub signal: usize,
    pub xi_hat: f64,
    pub p_value: Option<f64>,
}

/// Run every `(object, feature, signal)` test. Each test draws from its own
/// stream keyed by `(seed, object, feature, signal)`, so the output does not
/// depend on how the work is scheduled.
pub fn analyze(
    table: &DeltaTable,
    d: &ActionSequence,
    frt: Option<&FrtConfig>,
    seed: u64,
) -> Result<Vec<TestRow>> {
    let jobs: Vec<(&DeltaSeries, usize)> = table
        .series
        .iter()
        .flat_map(|s| (1..=d.signals()).map(move |q| (s, q)))
        .collect();
    jobs.par_iter()
        .map(|&(s, q)| {
            let (xi_hat, p_value) = match frt {
                Some(cfg) => {
                    let mut rng = rng_for(seed, &[s.object as u64, s.feature as u64, q as u64]);
                    let out = frt_test(&s.values, d, q, cfg, &mut rng)?;
                    (out.xi_hat, Some(out.p_value))
                }
                None => (diff_in_means(&s.values, d, q)?, None),
            };
            Ok(TestRow { object: s.object, feature: s.feature, signal: q, xi_hat, p_value })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    None,
    /// Threshold `α / (number of tests in the round)`.
    Bonferroni,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub object: usize,
    pub feature: usize,
    pub signal: usize,
    pub xi_hat: f64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub objects: usize,
    pub alpha: f64,
    pub correction: Correction,
    pub threshold: f64,
    pub num_tests: usize,
    pub mc_samples: usize,
    pub tests: Vec<TestOutcome>,
    pub body: BTreeSet<usize>,
}

impl TestReport {
    /// Smallest p-value per object; objects without tests score 1.
    pub fn object_scores(&self) -> Vec<f64> {
        let mut scores = vec![1.0f64; self.objects];
        for t in &self.tests {
            scores[t.object] = scores[t.object].min(t.p_value);
        }
        scores
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reject where `p ≤ threshold`; an object is body iff any of its tests is
/// rejected.
pub fn decide_body(
    rows: &[TestRow],
    objects: usize,
    alpha: f64,
    correction: Correction,
    mc_samples: usize,
) -> Result<TestReport> {
    if rows.is_empty() {
        return Err(Error::Empty("test table"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} not in (0, 1)")));
    }
    let threshold = match correction {
        Correction::None => alpha,
        Correction::Bonferroni => alpha / rows.len() as f64,
    };
    let mut body = BTreeSet::new();
    let tests = rows
        .iter()
        .map(|r| {
            let p_value = r
                .p_value
                .ok_or_else(|| Error::Structure(format!("missing p-value for {}/{}/{}", r.object, r.feature, r.signal)))?;
            if r.object >= objects {
                return Err(Error::ObjectOutOfRange { id: r.object, objects });
            }
            let rejected = p_value <= threshold;
            if rejected {
                body.insert(r.object);
            }
            Ok(TestOutcome { object: r.object, feature: r.feature, signal: r.signal, xi_hat: r.xi_hat, p_value, rejected })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TestReport { objects, alpha, correction, threshold, num_tests: rows.len(), mc_samples, tests, body })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub object: usize,
    pub feature: usize,
    pub signal: usize,
    pub xi_hat: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub objects: usize,
    pub alpha: f64,
    pub z: f64,
    pub mean: f64,
    pub variance: f64,
    /// Zero spread: nothing can be flagged.
    pub degenerate: bool,
    pub tests: Vec<BaselineOutcome>,
    pub body: BTreeSet<usize>,
}

impl BaselineReport {
    /// Ranking score per object, lower is more body-like: minus the largest
    /// deviation from the pooled mean in units of the interval half-width.
    pub fn object_scores(&self) -> Vec<f64> {
        let mut scores = vec![0.0f64; self.objects];
        if self.degenerate {
            return scores;
        }
        for t in &self.tests {
            let dev = (t.xi_hat - self.mean).abs() / (self.z * self.variance);
            scores[t.object] = scores[t.object].min(-dev);
        }
        scores
    }
}

/// Flag estimates outside `[ξ̄ − z·V̂, ξ̄ + z·V̂]`, where `ξ̄` and `V̂` are
/// the mean and sample variance of all pooled estimates and `z` is the
/// standard normal `1 − α/2` quantile.
pub fn baseline_decide(estimates: &[EffectEstimate], objects: usize, alpha: f64) -> Result<BaselineReport> {
    if estimates.len() < 2 {
        return Err(Error::Empty("baseline needs at least two estimates"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} not in (0, 1)")));
    }
    let n = estimates.len() as f64;
    let mean = estimates.iter().map(|e| e.xi_hat).sum::<f64>() / n;
    let variance = estimates.iter().map(|e| (e.xi_hat - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let scale = estimates.iter().fold(1.0f64, |m, e| m.max(e.xi_hat.abs()));
    // rounding noise of identical estimates is not spread
    let degenerate = !variance.is_finite() || variance <= (1e3 * f64::EPSILON * scale).powi(2);
    if degenerate {
        log::warn!("baseline: pooled estimates have zero variance, flagging nothing");
    }
    let half_width = z * variance;
    let mut body = BTreeSet::new();
    let tests = estimates
        .iter()
        .map(|e| {
            if e.object >= objects {
                return Err(Error::ObjectOutOfRange { id: e.object, objects });
            }
            let flagged = !degenerate && (e.xi_hat < mean - half_width || e.xi_hat > mean + half_width);
            if flagged {
                body.insert(e.object);
            }
            Ok(BaselineOutcome { object: e.object, feature: e.feature, signal: e.signal, xi_hat: e.xi_hat, flagged })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineReport { objects, alpha, z, mean, variance, degenerate, tests, body })
}

/// Per-firing effect of a signal on one feature of one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub object: usize,
    pub feature: usize,
    pub signal: usize,
    pub xi_hat: f64,
    pub p_value: f64,
    pub rejected: bool,
}

/// The effect list: `ξ̂` of every rejected test.
pub fn summarize_effects(report: &TestReport) -> Vec<EffectSummary> {
    report
        .tests
        .iter()
        .filter(|t| t.rejected)
        .map(|t| EffectSummary {
            object: t.object,
            feature: t.feature,
            signal: t.signal,
            xi_hat: t.xi_hat,
            p_value: t.p_value,
            rejected: t.rejected,
        })
        .collect()
}

pub const EFFECT_CSV_HEADER: &str = "object,feature,signal,xi_hat,p_value,rejected";

pub fn write_effects_csv<W: Write>(rows: &[EffectSummary], mut out: W) -> Result<()> {
    writeln!(out, "{EFFECT_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{:.9},{:.6},{}", r.object, r.feature, r.signal, r.xi_hat, r.p_value, r.rejected)?;
    }
    Ok(())
}

/// Full-science-table quantities. These need both potential outcomes of
/// every stage, so they exist only for simulation and testing.
pub mod oracle {
    use super::*;

    /// `Δ_t(q)` and `Δ_t(0)` for every stage.
    #[derive(Debug, Clone, PartialEq)]
    pub struct PotentialOutcomes {
        pub treated: Vec<f64>,
        pub control: Vec<f64>,
    }

    impl PotentialOutcomes {
        pub fn new(treated: Vec<f64>, control: Vec<f64>) -> Result<Self> {
            if treated.len() != control.len() {
                return Err(Error::Structure("potential outcome columns differ in length".into()));
            }
            Ok(Self { treated, control })
        }

        /// What would be observed under an allocation of `q`/0 labels.
        pub fn observe(&self, d: &ActionSequence, q: usize) -> Vec<f64> {
            d.as_slice()
                .iter()
                .enumerate()
                .map(|(t, &a)| if a == q { self.treated[t] } else { self.control[t] })
                .collect()
        }
    }

    #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
    pub struct VarianceComponents {
        pub s_q_sq: f64,
        pub s_0_sq: f64,
        pub s_tau_q_sq: f64,
        pub var_xi: f64,
    }

    /// `ξ = (1/T) Σ_t (Δ_t(q) − Δ_t(0))`.
    pub fn oracle_true_effect(po: &PotentialOutcomes) -> f64 {
        let t = po.treated.len() as f64;
        po.treated.iter().zip(&po.control).map(|(a, b)| a - b).sum::<f64>() / t
    }

    /// Finite-population variance of the difference-in-means estimator.
    pub fn oracle_variance(po: &PotentialOutcomes, n_q: usize, n_0: usize) -> Result<VarianceComponents> {
        let t = po.treated.len();
        if t < 2 {
            return Err(Error::Config("variance needs at least two stages".into()));
        }
        if n_q == 0 || n_0 == 0 {
            return Err(Error::Config("both arms need at least one stage".into()));
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mq, m0) = (mean(&po.treated), mean(&po.control));
        let denom = (t - 1) as f64;
        let s_q_sq = po.treated.iter().map(|x| (x - mq).powi(2)).sum::<f64>() / denom;
        let s_0_sq = po.control.iter().map(|x| (x - m0).powi(2)).sum::<f64>() / denom;
        let s_tau_q_sq = po
            .treated
            .iter()
            .zip(&po.control)
            .map(|(a, b)| ((a - mq) - (b - m0)).powi(2))
            .sum::<f64>()
            / denom;
        let var_xi = s_q_sq / n_q as f64 + s_0_sq / n_0 as f64 - s_tau_q_sq / (n_q + n_0) as f64;
        Ok(VarianceComponents { s_q_sq, s_0_sq, s_tau_q_sq, var_xi })
    }
}
