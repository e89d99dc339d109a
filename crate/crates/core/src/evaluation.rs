//! Scoring predicted body sets against ground truth.
//!
//! Undefined ratios (0/0) are carried as `None` and printed as `N/A`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>, objects: usize) -> Result<Confusion> {
    for &id in predicted.iter().chain(truth) {
        if id >= objects {
            return Err(Error::ObjectOutOfRange { id, objects });
        }
    }
    let tp = predicted.intersection(truth).count();
    let fp = predicted.len() - tp;
    let fn_ = truth.len() - tp;
    Ok(Confusion { tp, fp, fn_, tn: objects - tp - fp - fn_ })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub average_precision: Option<f64>,
}

pub const METRIC_NAMES: [&str; 6] = ["accuracy", "recall", "precision", "specificity", "f1", "ap"];

impl MetricSet {
    pub fn values(&self) -> [Option<f64>; 6] {
        [self.accuracy, self.recall, self.precision, self.specificity, self.f1, self.average_precision]
    }

    fn from_values(v: [Option<f64>; 6]) -> Self {
        MetricSet {
            accuracy: v[0],
            recall: v[1],
            precision: v[2],
            specificity: v[3],
            f1: v[4],
            average_precision: v[5],
        }
    }

    /// Comma-separated metric columns, `N/A` for undefined values.
    pub fn csv_fields(&self) -> String {
        self.values().iter().map(|v| fmt_metric(*v)).collect::<Vec<_>>().join(",")
    }
}

pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "N/A".to_string(),
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Threshold metrics from confusion counts. AP is left undefined; it needs
/// a ranking, see [`average_precision`].
pub fn metrics(c: &Confusion) -> MetricSet {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    MetricSet {
        accuracy: ratio(c.tp + c.tn, c.total()),
        recall,
        precision,
        specificity: ratio(c.tn, c.tn + c.fp),
        f1,
        average_precision: None,
    }
}

/// Area under the precision-recall curve of the ranking by ascending
/// score (ties by object id): the mean of precision@k over the ranks `k`
/// that hold a truth object.
pub fn average_precision(scores: &[f64], truth: &BTreeSet<usize>) -> Result<Option<f64>> {
    if let Some(&id) = truth.iter().find(|&&id| id >= scores.len()) {
        return Err(Error::ObjectOutOfRange { id, objects: scores.len() });
    }
    if truth.is_empty() {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, id) in order.iter().enumerate() {
        if truth.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(Some(sum / truth.len() as f64))
}

/// Per-metric arithmetic mean over rounds, skipping undefined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub rounds: usize,
    pub mean: MetricSet,
    /// Rounds excluded from each metric's mean, in [`METRIC_NAMES`] order.
    pub excluded: [usize; 6],
}

pub fn average_metrics(sets: &[MetricSet]) -> AveragedMetrics {
    let mut sums = [0.0f64; 6];
    let mut counts = [0usize; 6];
    for s in sets {
        for (i, v) in s.values().iter().enumerate() {
            if let Some(x) = v {
                sums[i] += x;
                counts[i] += 1;
            }
        }
    }
    let mut mean = [None; 6];
    let mut excluded = [0usize; 6];
    for i in 0..6 {
        mean[i] = (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
        excluded[i] = sets.len() - counts[i];
    }
    AveragedMetrics { rounds: sets.len(), mean: MetricSet::from_values(mean), excluded }
}

impl fmt::Display for MetricSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in METRIC_NAMES.iter().zip(self.values()).enumerate() {
            if i > 0 {
                write!(f, "  ")?;
            }
            match v {
                Some(x) => write!(f, "{name}={x:.3}")?,
                None => write!(f, "{name}=N/A")?,
            }
        }
        Ok(())
    }
}
