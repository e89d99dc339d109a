//! End-to-end rounds, multi-round suites and one-parameter sweeps.
//!
//! A round generates a world, draws an allocation, runs the stages, hands
//! only the observed snapshots and the allocation to inference, and scores
//! the prediction. Every random stream is derived from the round seed, and
//! round seeds from `(master, task, round)`, so output never depends on the
//! worker count.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::randomize_allocation;
use crate::error::{Error, Result};
use crate::evaluation::{average_metrics, average_precision, confusion, metrics, AveragedMetrics, MetricSet};
use crate::inference::{
    analyze, baseline_decide, decide_body, BaselineReport, Correction, DeltaTable, EffectEstimate, FrtConfig,
    TestReport, TestRow,
};
use crate::model::{ActionSequence, WorldSnapshot};
use crate::scenario::{generate_task, Scenario, TaskConfig, TaskId};
use crate::seed::{derive_seed, rng_for, stream};
use crate::sim::Simulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Frt05,
    Frt01,
    FrtBonferroni,
    Baseline05,
    Baseline01,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Frt05, Method::Frt01, Method::FrtBonferroni, Method::Baseline05, Method::Baseline01];
    pub const FRT: [Method; 3] = [Method::Frt05, Method::Frt01, Method::FrtBonferroni];

    pub fn name(self) -> &'static str {
        match self {
            Method::Frt05 => "frt-0.05",
            Method::Frt01 => "frt-0.01",
            Method::FrtBonferroni => "frt-bonferroni",
            Method::Baseline05 => "baseline-0.05",
            Method::Baseline01 => "baseline-0.01",
        }
    }

    pub fn is_frt(self) -> bool {
        matches!(self, Method::Frt05 | Method::Frt01 | Method::FrtBonferroni)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inference settings shared by every round of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub frt: FrtConfig,
    /// Family-wise α for `frt-bonferroni`.
    pub bonferroni_alpha: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { frt: FrtConfig::default(), bonferroni_alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodReport {
    Frt(TestReport),
    Baseline(BaselineReport),
}

impl MethodReport {
    pub fn body(&self) -> &BTreeSet<usize> {
        match self {
            MethodReport::Frt(r) => &r.body,
            MethodReport::Baseline(r) => &r.body,
        }
    }

    fn object_scores(&self) -> Vec<f64> {
        match self {
            MethodReport::Frt(r) => r.object_scores(),
            MethodReport::Baseline(r) => r.object_scores(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub config_hash: String,
    pub seed: u64,
    pub task: TaskId,
    pub method: Method,
    pub report: MethodReport,
    pub truth: BTreeSet<usize>,
    pub metrics: MetricSet,
    #[serde(skip)]
    pub wall_clock: Duration,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<PathBuf>,
}

impl RoundResult {
    pub fn predicted(&self) -> &BTreeSet<usize> {
        self.report.body()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Hex SHA-256 of the configuration with the seed cleared, plus the method
/// and inference options.
pub fn config_hash(cfg: &TaskConfig, method: Method, opts: &RunOptions) -> String {
    let cfg = TaskConfig { seed: 0, ..cfg.clone() };
    let payload = serde_json::json!({ "config": cfg, "method": method, "options": opts });
    let digest = Sha256::digest(payload.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything a round produced before inference.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub scenario: Scenario,
    pub actions: ActionSequence,
    /// `S_0 … S_T` of the true world.
    pub truth: Vec<WorldSnapshot>,
    /// What the learner senses at each stage.
    pub observed: Vec<WorldSnapshot>,
}

pub fn simulate(cfg: &TaskConfig) -> Result<Simulation> {
    let scenario = generate_task(cfg)?;
    let counts = cfg.action_counts()?;
    let actions = randomize_allocation(cfg.stages, &counts, &mut rng_for(cfg.seed, &[stream::ALLOCATION]))?;
    let mut sim = Simulator::new(&scenario, cfg.noise, cfg.seed)?;
    let mut truth = Vec::with_capacity(cfg.stages + 1);
    let mut observed = Vec::with_capacity(cfg.stages + 1);
    let mut world = scenario.initial.clone();
    observed.push(sim.observe(&world));
    for &q in actions.as_slice() {
        let next = sim.advance(&world, q)?;
        observed.push(sim.observe(&next));
        truth.push(std::mem::replace(&mut world, next));
    }
    truth.push(world);
    Ok(Simulation { scenario, actions, truth, observed })
}

/// Apply every requested decision rule to one observed run. Sees only the
/// observed snapshots and the allocation.
pub fn infer(
    observed: &[WorldSnapshot],
    actions: &ActionSequence,
    methods: &[Method],
    opts: &RunOptions,
    seed: u64,
) -> Result<Vec<MethodReport>> {
    let table = DeltaTable::from_snapshots(observed)?;
    let need_p = methods.iter().any(|m| m.is_frt());
    let rows: Vec<TestRow> = analyze(&table, actions, need_p.then_some(&opts.frt), derive_seed(seed, &[stream::INFERENCE]))?;
    let estimates: Vec<EffectEstimate> = rows
        .iter()
        .map(|r| EffectEstimate { object: r.object, feature: r.feature, signal: r.signal, xi_hat: r.xi_hat })
        .collect();
    let objects = table.objects;
    methods
        .iter()
        .map(|&m| {
            let mc = opts.frt.mc_samples;
            Ok(match m {
                Method::Frt05 => MethodReport::Frt(decide_body(&rows, objects, 0.05, Correction::None, mc)?),
                Method::Frt01 => MethodReport::Frt(decide_body(&rows, objects, 0.01, Correction::None, mc)?),
                Method::FrtBonferroni => MethodReport::Frt(decide_body(
                    &rows,
                    objects,
                    opts.bonferroni_alpha,
                    Correction::Bonferroni,
                    mc,
                )?),
                Method::Baseline05 => MethodReport::Baseline(baseline_decide(&estimates, objects, 0.05)?),
                Method::Baseline01 => MethodReport::Baseline(baseline_decide(&estimates, objects, 0.01)?),
            })
        })
        .collect()
}

fn score(report: &MethodReport, truth: &BTreeSet<usize>, objects: usize) -> Result<MetricSet> {
    let mut m = metrics(&confusion(report.body(), truth, objects)?);
    m.average_precision = average_precision(&report.object_scores(), truth)?;
    Ok(m)
}

/// One simulated round scored under several methods. All methods see the
/// same world, allocation and p-values.
pub fn run_round_methods(cfg: &TaskConfig, methods: &[Method], opts: &RunOptions) -> Result<Vec<RoundResult>> {
    let start = Instant::now();
    let sim = simulate(cfg)?;
    let reports = infer(&sim.observed, &sim.actions, methods, opts, cfg.seed)?;
    let elapsed = start.elapsed();
    let truth = &sim.scenario.truth.body_set;
    let objects = sim.scenario.objects();
    methods
        .iter()
        .zip(reports)
        .map(|(&method, report)| {
            Ok(RoundResult {
                config_hash: config_hash(cfg, method, opts),
                seed: cfg.seed,
                task: cfg.task,
                method,
                metrics: score(&report, truth, objects)?,
                truth: truth.clone(),
                report,
                wall_clock: elapsed,
                trace: None,
            })
        })
        .collect()
}

pub fn run_round(cfg: &TaskConfig, method: Method, opts: &RunOptions) -> Result<RoundResult> {
    let mut out = run_round_methods(cfg, &[method], opts)?;
    Ok(out.remove(0))
}

/// Seed of round `round` of `task` under a master seed.
pub fn round_seed(master: u64, task: TaskId, round: usize) -> u64 {
    derive_seed(master, &[task.index() as u64, round as u64])
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub tasks: Vec<TaskId>,
    pub methods: Vec<Method>,
    pub rounds: usize,
    /// Template for every task; `task` and `seed` are overwritten.
    pub base: TaskConfig,
    pub seed: u64,
    #[serde(default)]
    pub options: RunOptions,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            tasks: TaskId::BASIC.to_vec(),
            methods: Method::ALL.to_vec(),
            rounds: 10,
            base: TaskConfig::default(),
            seed: 0,
            options: RunOptions::default(),
        }
    }
}

impl SuiteSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.tasks.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("a suite needs at least one task and one method".into()));
        }
        Ok(())
    }
}

/// Averages for one `(task, method)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub task: TaskId,
    pub method: Method,
    pub averaged: AveragedMetrics,
    /// Rounds that errored and were left out.
    pub failed: usize,
    /// Mean size of the predicted body set.
    pub mean_flagged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub rows: Vec<SuiteRow>,
    /// Per-round results, sorted by task, method, round.
    pub rounds: Vec<RoundResult>,
    /// `(task, round, message)` of each failed round.
    pub failures: Vec<(TaskId, usize, String)>,
}

pub const SUITE_CSV_HEADER: &str = "task,method,rounds,accuracy,recall,precision,specificity,f1,ap";
pub const SWEEP_CSV_HEADER: &str = "task,method,param,value,rounds,accuracy,recall,precision,specificity,f1,ap";

fn run_grid(
    configs: Vec<TaskConfig>,
    rounds: usize,
    seed: u64,
    methods: &[Method],
    opts: &RunOptions,
    workers: Option<usize>,
) -> Result<Vec<Vec<Result<Vec<RoundResult>>>>> {
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..rounds).map(move |r| (c, r))).collect();
    let flat: Vec<Result<Vec<RoundResult>>> = with_pool(workers, || {
        jobs.par_iter()
            .map(|&(c, r)| {
                let cfg = TaskConfig { seed: round_seed(seed, configs[c].task, r), ..configs[c].clone() };
                run_round_methods(&cfg, methods, opts)
            })
            .collect()
    })?;
    let mut grid: Vec<Vec<_>> = (0..configs.len()).map(|_| Vec::with_capacity(rounds)).collect();
    for ((c, _), res) in jobs.into_iter().zip(flat) {
        grid[c].push(res);
    }
    Ok(grid)
}

fn summarize(
    task: TaskId,
    rounds: &[Result<Vec<RoundResult>>],
    methods: &[Method],
    collected: &mut Vec<RoundResult>,
    failures: &mut Vec<(TaskId, usize, String)>,
) -> Vec<SuiteRow> {
    for (r, res) in rounds.iter().enumerate() {
        if let Err(e) = res {
            log::warn!("{task} round {r} failed: {e}");
            failures.push((task, r, e.to_string()));
        }
    }
    let ok: Vec<&Vec<RoundResult>> = rounds.iter().filter_map(|r| r.as_ref().ok()).collect();
    methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let results: Vec<&RoundResult> = ok.iter().map(|v| &v[i]).collect();
            let sets: Vec<MetricSet> = results.iter().map(|r| r.metrics).collect();
            let mean_flagged = if results.is_empty() {
                0.0
            } else {
                results.iter().map(|r| r.predicted().len() as f64).sum::<f64>() / results.len() as f64
            };
            collected.extend(results.into_iter().cloned());
            SuiteRow {
                task,
                method,
                averaged: average_metrics(&sets),
                failed: rounds.len() - ok.len(),
                mean_flagged,
            }
        })
        .collect()
}

pub fn run_suite(spec: &SuiteSpec, workers: Option<usize>) -> Result<SuiteResult> {
    spec.validate()?;
    let configs: Vec<TaskConfig> =
        spec.tasks.iter().map(|&task| TaskConfig { task, ..spec.base.clone() }).collect();
    let grid = run_grid(configs, spec.rounds, spec.seed, &spec.methods, &spec.options, workers)?;
    let mut rounds = Vec::new();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for (task, cell) in spec.tasks.iter().zip(&grid) {
        rows.extend(summarize(*task, cell, &spec.methods, &mut rounds, &mut failures));
    }
    Ok(SuiteResult { rows, rounds, failures })
}

pub fn write_suite_csv<W: Write>(rows: &[SuiteRow], mut out: W) -> Result<()> {
    writeln!(out, "{SUITE_CSV_HEADER}")?;
    for r in rows {
        let n = r.averaged.rounds;
        writeln!(out, "{},{},{},{}", r.task, r.method, n, r.averaged.mean.csv_fields())?;
    }
    Ok(())
}

/// Fixed-width table for terminals, with N/A exclusions and failures noted.
pub fn format_suite_table(rows: &[SuiteRow]) -> String {
    let mut s = format!(
        "{:<5} {:<15} {:>6} {:>8} {:>8} {:>9} {:>11} {:>8} {:>8}  notes\n",
        "task", "method", "rounds", "accuracy", "recall", "precision", "specificity", "f1", "ap"
    );
    for r in rows {
        let v = r.averaged.mean.values();
        let f = |x: Option<f64>| match x {
            Some(x) => format!("{x:.3}"),
            None => "N/A".into(),
        };
        let mut notes = Vec::new();
        let na: Vec<String> = crate::evaluation::METRIC_NAMES
            .iter()
            .zip(r.averaged.excluded)
            .filter(|(_, n)| *n > 0)
            .map(|(name, n)| format!("{name} N/A x{n}"))
            .collect();
        if !na.is_empty() {
            notes.push(na.join(" "));
        }
        if r.failed > 0 {
            notes.push(format!("{} failed", r.failed));
        }
        s.push_str(&format!(
            "{:<5} {:<15} {:>6} {:>8} {:>8} {:>9} {:>11} {:>8} {:>8}  {}\n",
            r.task.to_string(),
            r.method.name(),
            r.averaged.rounds,
            f(v[0]),
            f(v[1]),
            f(v[2]),
            f(v[3]),
            f(v[4]),
            f(v[5]),
            notes.join("; ")
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    Q,
    N,
    T,
    #[serde(rename = "n1")]
    N1,
    #[serde(rename = "n2")]
    N2,
    #[serde(rename = "n3")]
    N3,
    #[serde(rename = "n4")]
    N4,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Q => "Q",
            SweepParam::N => "N",
            SweepParam::T => "T",
            SweepParam::N1 => "n1",
            SweepParam::N2 => "n2",
            SweepParam::N3 => "n3",
            SweepParam::N4 => "n4",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, SweepParam::Q | SweepParam::N | SweepParam::T)
    }

    /// `base` with this parameter set to `value`. Explicit action counts
    /// are dropped when Q or T changes.
    pub fn apply(self, base: &TaskConfig, value: f64) -> Result<TaskConfig> {
        if self.is_integer() && (value.fract() != 0.0 || value < 1.0) {
            return Err(Error::Config(format!("{} needs a positive integer, got {value}", self.name())));
        }
        let mut cfg = base.clone();
        match self {
            SweepParam::Q => {
                cfg.signals = value as usize;
                cfg.counts = None;
            }
            SweepParam::N => cfg.objects = value as usize,
            SweepParam::T => {
                cfg.stages = value as usize;
                cfg.counts = None;
            }
            SweepParam::N1 => cfg.noise.n1_intensity = value,
            SweepParam::N2 => cfg.noise.n2_intensity = value,
            SweepParam::N3 => cfg.noise.n3_failure_prob = value,
            SweepParam::N4 => cfg.noise.n4_sensing_error = value,
        }
        Ok(cfg)
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::Q, SweepParam::N, SweepParam::T, SweepParam::N1, SweepParam::N2, SweepParam::N3, SweepParam::N4]
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: TaskConfig,
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub rounds: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    #[serde(default)]
    pub options: RunOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Config("sweep values must be strictly monotone".into()));
        }
        if self.rounds == 0 || self.methods.is_empty() {
            return Err(Error::Config("sweep needs rounds >= 1 and at least one method".into()));
        }
        for &v in &self.values {
            self.param.apply(&self.base, v)?.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub row: SuiteRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub task: TaskId,
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(f64, usize, String)>,
}

/// Round `r` uses the same seed at every swept value, so curves compare
/// like with like.
pub fn run_sweep(spec: &SweepSpec, workers: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let configs = spec
        .values
        .iter()
        .map(|&v| spec.param.apply(&spec.base, v))
        .collect::<Result<Vec<_>>>()?;
    let grid = run_grid(configs, spec.rounds, spec.seed, &spec.methods, &spec.options, workers)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&value, cell) in spec.values.iter().zip(&grid) {
        let mut sink = Vec::new();
        let mut fails = Vec::new();
        for row in summarize(spec.base.task, cell, &spec.methods, &mut sink, &mut fails) {
            rows.push(SweepRow { value, row });
        }
        failures.extend(fails.into_iter().map(|(_, r, m)| (value, r, m)));
    }
    Ok(SweepResult { task: spec.base.task, param: spec.param, rows, failures })
}

pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            result.task,
            r.row.method,
            result.param,
            r.value,
            r.row.averaged.rounds,
            r.row.averaged.mean.csv_fields()
        )?;
    }
    Ok(())
}

/// Metric by name from a row, for trend checks.
pub fn metric_of(set: &MetricSet, name: &str) -> Option<f64> {
    crate::evaluation::METRIC_NAMES.iter().position(|n| *n == name).and_then(|i| set.values()[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::NoiseConfig;

    fn small(task: TaskId) -> TaskConfig {
        TaskConfig { task, objects: 10, signals: 2, stages: 30, seed: 5, ..Default::default() }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("frt".parse::<Method>().is_err());
    }

    #[test]
    fn round_is_deterministic() {
        let cfg = small(TaskId::T2);
        let a = run_round(&cfg, Method::FrtBonferroni, &RunOptions::default()).unwrap();
        let b = run_round(&cfg, Method::FrtBonferroni, &RunOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn config_hash_ignores_seed_only() {
        let opts = RunOptions::default();
        let a = small(TaskId::T2);
        let b = TaskConfig { seed: 99, ..a.clone() };
        let c = TaskConfig { stages: 31, ..a.clone() };
        let h = |c: &TaskConfig, m| config_hash(c, m, &opts);
        assert_eq!(h(&a, Method::Frt05), h(&b, Method::Frt05));
        assert_ne!(h(&a, Method::Frt05), h(&c, Method::Frt05));
        assert_ne!(h(&a, Method::Frt05), h(&a, Method::Frt01));
    }

    #[test]
    fn simulation_lengths() {
        let sim = simulate(&small(TaskId::T6)).unwrap();
        assert_eq!(sim.truth.len(), 31);
        assert_eq!(sim.observed.len(), 31);
        assert_eq!(sim.actions.len(), 30);
    }

    #[test]
    fn noise_free_observation_equals_truth() {
        let cfg = TaskConfig { noise: NoiseConfig::none(), ..small(TaskId::T3) };
        let sim = simulate(&cfg).unwrap();
        assert_eq!(sim.truth, sim.observed);
    }

    #[test]
    fn single_round_suite_matches_round() {
        let spec = SuiteSpec {
            tasks: vec![TaskId::T4],
            methods: vec![Method::Frt05],
            rounds: 1,
            base: small(TaskId::T4),
            seed: 11,
            options: RunOptions::default(),
        };
        let suite = run_suite(&spec, Some(1)).unwrap();
        let cfg = TaskConfig { seed: round_seed(11, TaskId::T4, 0), ..small(TaskId::T4) };
        let round = run_round(&cfg, Method::Frt05, &RunOptions::default()).unwrap();
        assert_eq!(suite.rows[0].averaged.mean, round.metrics);
    }

    #[test]
    fn sweep_validation() {
        let spec = SweepSpec {
            base: small(TaskId::T8),
            param: SweepParam::T,
            values: vec![30.0, 20.0, 40.0],
            rounds: 1,
            methods: vec![Method::Frt05],
            seed: 0,
            options: RunOptions::default(),
        };
        assert!(spec.validate().is_err());
        assert!(SweepSpec { values: vec![], ..spec.clone() }.validate().is_err());
        assert!(SweepSpec { values: vec![20.5], ..spec.clone() }.validate().is_err());
        assert!(SweepSpec { values: vec![20.0, 30.0], ..spec }.validate().is_ok());
    }

    #[test]
    fn zero_rounds_rejected() {
        let spec = SuiteSpec { rounds: 0, ..Default::default() };
        assert!(run_suite(&spec, None).is_err());
    }
}
