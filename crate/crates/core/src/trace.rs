//! JSON-lines round traces.
//!
//! The first line is a header holding the configuration, method, options
//! and allocation. Each following line is one stage:
//! `{"t", "action", "true", "observed"}`, with `action` null at `t = 0`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{infer, simulate, Method, RoundResult, RunOptions, Simulation};
use crate::model::{ActionSequence, WorldSnapshot};
use crate::scenario::TaskConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: TaskConfig,
    pub method: Method,
    pub options: RunOptions,
    pub actions: Vec<usize>,
    pub signals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub action: Option<usize>,
    #[serde(rename = "true")]
    pub true_state: WorldSnapshot,
    pub observed: WorldSnapshot,
}

pub fn write_trace(
    path: &Path,
    cfg: &TaskConfig,
    method: Method,
    opts: &RunOptions,
    sim: &Simulation,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = TraceHeader {
        config: cfg.clone(),
        method,
        options: *opts,
        actions: sim.actions.as_slice().to_vec(),
        signals: sim.actions.signals(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for (t, (truth, observed)) in sim.truth.iter().zip(&sim.observed).enumerate() {
        let record = TraceRecord {
            t,
            action: t.checked_sub(1).map(|i| sim.actions.as_slice()[i]),
            true_state: truth.clone(),
            observed: observed.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<TraceRecord>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| Error::Trace("empty trace".into()))??;
    let header: TraceHeader = serde_json::from_str(&first)?;
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<TraceRecord>(&line)?);
    }
    for (i, r) in records.iter().enumerate() {
        if r.t != i {
            return Err(Error::Trace(format!("record {i} has stage {}", r.t)));
        }
    }
    if records.len() != header.actions.len() + 1 {
        return Err(Error::Trace(format!(
            "{} stage records for {} actions",
            records.len(),
            header.actions.len()
        )));
    }
    Ok((header, records))
}

/// A round that also writes its trace to `path`.
pub fn run_round_traced(cfg: &TaskConfig, method: Method, opts: &RunOptions, path: &Path) -> Result<RoundResult> {
    let sim = simulate(cfg)?;
    write_trace(path, cfg, method, opts, &sim)?;
    let mut result = crate::harness::run_round(cfg, method, opts)?;
    result.trace = Some(path.to_path_buf());
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub header: TraceHeader,
    /// The method's body prediction from the recorded observations.
    pub predicted: std::collections::BTreeSet<usize>,
    /// Re-simulating the header's configuration reproduces every recorded
    /// snapshot.
    pub reproducible: bool,
    /// The recomputed round.
    pub result: RoundResult,
}

/// Re-run inference on the recorded observations and check the recording
/// against a fresh simulation of the same configuration.
pub fn replay(path: &Path) -> Result<Replay> {
    let (header, records) = read_trace(path)?;
    let observed: Vec<WorldSnapshot> = records.iter().map(|r| r.observed.clone()).collect();
    let actions = ActionSequence::new(header.actions.clone(), header.signals)?;
    let reports = infer(&observed, &actions, &[header.method], &header.options, header.config.seed)?;
    let predicted = reports[0].body().clone();

    let sim = simulate(&header.config)?;
    let reproducible = sim.actions == actions
        && sim.observed == observed
        && sim.truth.iter().zip(&records).all(|(a, r)| *a == r.true_state);
    let result = crate::harness::run_round(&header.config, header.method, &header.options)?;
    Ok(Replay { header, predicted, reproducible, result })
}
