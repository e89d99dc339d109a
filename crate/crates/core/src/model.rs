//! Domain types shared by the simulator and the inference engine.
//!
//! A world is a grid of `objects × slots`; each slot has a [`FeatureKind`]
//! and a cell may be absent when an object does not carry that feature.
//! Stage deltas are taken per cell and later flattened into scalar
//! *feature columns* (one per axis) so that inference never needs to know
//! what kind of feature it is looking at.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::EffectTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    /// Radians, stored in `[0, 2π)`.
    Rotation,
    Position2D,
    Position3D,
    /// Cyclic integer level in `0..levels` (lights have two levels).
    DiscreteState { levels: u32 },
}

impl FeatureKind {
    pub fn components(self) -> usize {
        match self {
            FeatureKind::Rotation | FeatureKind::DiscreteState { .. } => 1,
            FeatureKind::Position2D => 2,
            FeatureKind::Position3D => 3,
        }
    }

    pub fn axis_label(self, axis: usize) -> String {
        match self {
            FeatureKind::Rotation => "rot".to_string(),
            FeatureKind::Position2D => format!("pos2.{}", ["x", "y"][axis]),
            FeatureKind::Position3D => format!("pos3.{}", ["x", "y", "z"][axis]),
            FeatureKind::DiscreteState { .. } => "state".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue {
    Rotation(f64),
    Position2D([f64; 2]),
    Position3D([f64; 3]),
    Discrete(u32),
}

impl FeatureValue {
    pub fn matches(&self, kind: FeatureKind) -> bool {
        match (self, kind) {
            (FeatureValue::Rotation(a), FeatureKind::Rotation) => (0.0..TAU).contains(a),
            (FeatureValue::Position2D(_), FeatureKind::Position2D) => true,
            (FeatureValue::Position3D(_), FeatureKind::Position3D) => true,
            (FeatureValue::Discrete(l), FeatureKind::DiscreteState { levels }) => *l < levels,
            _ => false,
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match *self {
            FeatureValue::Rotation(a) => vec![a],
            FeatureValue::Position2D(p) => p.to_vec(),
            FeatureValue::Position3D(p) => p.to_vec(),
            FeatureValue::Discrete(l) => vec![f64::from(l)],
        }
    }

    fn from_components(kind: FeatureKind, c: &[f64]) -> Result<Self> {
        if c.len() != kind.components() {
            return Err(Error::Structure(format!(
                "{kind:?} expects {} components, got {}",
                kind.components(),
                c.len()
            )));
        }
        let value = match kind {
            FeatureKind::Rotation => FeatureValue::Rotation(wrap_angle(c[0])),
            FeatureKind::Position2D => FeatureValue::Position2D([c[0], c[1]]),
            FeatureKind::Position3D => FeatureValue::Position3D([c[0], c[1], c[2]]),
            FeatureKind::DiscreteState { levels } => {
                if c[0] < 0.0 || c[0].fract() != 0.0 || c[0] >= f64::from(levels) {
                    return Err(Error::Structure(format!(
                        "discrete level {} outside 0..{levels}",
                        c[0]
                    )));
                }
                FeatureValue::Discrete(c[0] as u32)
            }
        };
        Ok(value)
    }
}

/// Normalize an angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Shortest signed angular difference `b − a`, in `(−π, π]`.
pub fn shortest_angle(a: f64, b: f64) -> f64 {
    let d = (b - a + PI).rem_euclid(TAU) - PI;
    if d <= -PI {
        d + TAU
    } else {
        d
    }
}

/// Shortest signed cyclic difference `b − a` on `levels` levels, in
/// `(−levels/2, levels/2]`. For a two-level light any change is `+1`.
pub fn cyclic_level_delta(a: u32, b: u32, levels: u32) -> i64 {
    let l = i64::from(levels);
    let r = (i64::from(b) - i64::from(a)).rem_euclid(l);
    if 2 * r > l {
        r - l
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaValue {
    Rotation(f64),
    Position2D([f64; 2]),
    Position3D([f64; 3]),
    Discrete(i64),
}

impl DeltaValue {
    pub fn component(&self, axis: usize) -> f64 {
        match self {
            DeltaValue::Rotation(d) => *d,
            DeltaValue::Position2D(d) => d[axis],
            DeltaValue::Position3D(d) => d[axis],
            DeltaValue::Discrete(d) => *d as f64,
        }
    }

    pub fn components(&self) -> Vec<f64> {
        match *self {
            DeltaValue::Rotation(d) => vec![d],
            DeltaValue::Position2D(d) => d.to_vec(),
            DeltaValue::Position3D(d) => d.to_vec(),
            DeltaValue::Discrete(d) => vec![d as f64],
        }
    }

    fn from_components(kind: FeatureKind, c: &[f64]) -> Result<Self> {
        if c.len() != kind.components() {
            return Err(Error::Structure(format!(
                "{kind:?} delta expects {} components, got {}",
                kind.components(),
                c.len()
            )));
        }
        Ok(match kind {
            FeatureKind::Rotation => DeltaValue::Rotation(c[0]),
            FeatureKind::Position2D => DeltaValue::Position2D([c[0], c[1]]),
            FeatureKind::Position3D => DeltaValue::Position3D([c[0], c[1], c[2]]),
            FeatureKind::DiscreteState { .. } => DeltaValue::Discrete(c[0].round() as i64),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.components().iter().all(|&x| x == 0.0)
    }
}

/// One scalar column of the flattened feature grid: `axis` of `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub slot: usize,
    pub axis: usize,
}

/// Flattened column layout for a slot layout. The position of a column in
/// the returned vector is its global feature index.
pub fn feature_columns(kinds: &[FeatureKind]) -> Vec<FeatureColumn> {
    kinds
        .iter()
        .enumerate()
        .flat_map(|(slot, kind)| (0..kind.components()).map(move |axis| FeatureColumn { slot, axis }))
        .collect()
}

/// Feature values of every object at one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SnapshotRecord", try_from = "SnapshotRecord")]
pub struct WorldSnapshot {
    stage: usize,
    kinds: Vec<FeatureKind>,
    values: Vec<Vec<Option<FeatureValue>>>,
}

impl WorldSnapshot {
    pub fn new(
        stage: usize,
        kinds: Vec<FeatureKind>,
        values: Vec<Vec<Option<FeatureValue>>>,
    ) -> Result<Self> {
        for (n, row) in values.iter().enumerate() {
            if row.len() != kinds.len() {
                return Err(Error::Structure(format!(
                    "object {n} has {} slots, layout has {}",
                    row.len(),
                    kinds.len()
                )));
            }
            for (k, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    if !v.matches(kinds[k]) {
                        return Err(Error::Structure(format!(
                            "object {n} slot {k}: {v:?} is not a valid {:?}",
                            kinds[k]
                        )));
                    }
                }
            }
        }
        Ok(Self { stage, kinds, values })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn objects(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, object: usize, slot: usize) -> Option<&FeatureValue> {
        self.values[object][slot].as_ref()
    }

    pub fn rows(&self) -> &[Vec<Option<FeatureValue>>] {
        &self.values
    }

    /// Present/absent pattern, `objects × slots`.
    pub fn mask(&self) -> Vec<Vec<bool>> {
        self.values
            .iter()
            .map(|row| row.iter().map(Option::is_some).collect())
            .collect()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.kinds == other.kinds
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.is_some() == y.is_some()))
    }

    /// Replace a present cell. The value must match the slot kind; rotations
    /// are normalized.
    pub fn set(&mut self, object: usize, slot: usize, value: FeatureValue) {
        let value = match value {
            FeatureValue::Rotation(a) => FeatureValue::Rotation(wrap_angle(a)),
            v => v,
        };
        debug_assert!(value.matches(self.kinds[slot]));
        debug_assert!(self.values[object][slot].is_some());
        self.values[object][slot] = Some(value);
    }

    pub(crate) fn with_stage(mut self, stage: usize) -> Self {
        self.stage = stage;
        self
    }

    /// Append objects (used when a mirror adds reflections).
    pub(crate) fn push_object(&mut self, row: Vec<Option<FeatureValue>>) {
        debug_assert_eq!(row.len(), self.kinds.len());
        self.values.push(row);
    }
}

/// JSON form of a snapshot: `{stage, values, mask}` plus the slot kinds so
/// the record is self-describing. Absent cells carry an empty value list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub stage: usize,
    pub values: Vec<Vec<Vec<f64>>>,
    pub mask: Vec<Vec<bool>>,
    pub kinds: Vec<FeatureKind>,
}

impl From<WorldSnapshot> for SnapshotRecord {
    fn from(s: WorldSnapshot) -> Self {
        let mask = s.mask();
        let values = s
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.map(|v| v.components()).unwrap_or_default())
                    .collect()
            })
            .collect();
        SnapshotRecord { stage: s.stage, values, mask, kinds: s.kinds }
    }
}

impl TryFrom<SnapshotRecord> for WorldSnapshot {
    type Error = Error;

    fn try_from(r: SnapshotRecord) -> Result<Self> {
        let values = decode_cells(&r.values, &r.mask, &r.kinds, FeatureValue::from_components)?;
        WorldSnapshot::new(r.stage, r.kinds, values)
    }
}

fn decode_cells<T>(
    values: &[Vec<Vec<f64>>],
    mask: &[Vec<bool>],
    kinds: &[FeatureKind],
    decode: impl Fn(FeatureKind, &[f64]) -> Result<T>,
) -> Result<Vec<Vec<Option<T>>>> {
    if values.len() != mask.len() {
        return Err(Error::Structure("values and mask disagree on object count".into()));
    }
    values
        .iter()
        .zip(mask)
        .map(|(row, mrow)| {
            if row.len() != kinds.len() || mrow.len() != kinds.len() {
                return Err(Error::Structure("row width differs from slot count".into()));
            }
            row.iter()
                .zip(mrow)
                .zip(kinds)
                .map(|((c, &present), &kind)| present.then(|| decode(kind, c)).transpose())
                .collect()
        })
        .collect()
}

/// Per-cell change between two consecutive stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DeltaRecord", try_from = "DeltaRecord")]
pub struct StageDelta {
    stage: usize,
    kinds: Vec<FeatureKind>,
    values: Vec<Vec<Option<DeltaValue>>>,
}

impl StageDelta {
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn objects(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, object: usize, slot: usize) -> Option<&DeltaValue> {
        self.values[object][slot].as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().flatten().all(DeltaValue::is_zero)
    }

    /// Componentwise negation.
    pub fn negated(&self) -> Self {
        let values = self
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| {
                        c.map(|d| match d {
                            DeltaValue::Rotation(x) => DeltaValue::Rotation(-x),
                            DeltaValue::Position2D([x, y]) => DeltaValue::Position2D([-x, -y]),
                            DeltaValue::Position3D([x, y, z]) => {
                                DeltaValue::Position3D([-x, -y, -z])
                            }
                            DeltaValue::Discrete(x) => DeltaValue::Discrete(-x),
                        })
                    })
                    .collect()
            })
            .collect();
        StageDelta { stage: self.stage, kinds: self.kinds.clone(), values }
    }

    pub fn with_stage(mut self, stage: usize) -> Self {
        self.stage = stage;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub stage: usize,
    pub values: Vec<Vec<Vec<f64>>>,
    pub mask: Vec<Vec<bool>>,
    pub kinds: Vec<FeatureKind>,
}

impl From<StageDelta> for DeltaRecord {
    fn from(d: StageDelta) -> Self {
        let mask = d
            .values
            .iter()
            .map(|row| row.iter().map(Option::is_some).collect())
            .collect();
        let values = d
            .values
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.map(|v| v.components()).unwrap_or_default())
                    .collect()
            })
            .collect();
        DeltaRecord { stage: d.stage, values, mask, kinds: d.kinds }
    }
}

impl TryFrom<DeltaRecord> for StageDelta {
    type Error = Error;

    fn try_from(r: DeltaRecord) -> Result<Self> {
        let values = decode_cells(&r.values, &r.mask, &r.kinds, DeltaValue::from_components)?;
        Ok(StageDelta { stage: r.stage, kinds: r.kinds, values })
    }
}

/// Componentwise change from `prev` to `next`.
///
/// Rotations use the shortest signed angle, discrete states the shortest
/// signed cyclic step, positions plain per-axis differences.
pub fn stage_delta(prev: &WorldSnapshot, next: &WorldSnapshot) -> Result<StageDelta> {
    if next.stage != prev.stage + 1 {
        return Err(Error::Structure(format!(
            "stages {} -> {} are not consecutive",
            prev.stage, next.stage
        )));
    }
    if !prev.same_layout(next) {
        return Err(Error::Structure("snapshots have different layouts".into()));
    }
    let values = prev
        .values
        .iter()
        .zip(&next.values)
        .map(|(a_row, b_row)| {
            a_row
                .iter()
                .zip(b_row)
                .zip(&prev.kinds)
                .map(|((a, b), kind)| match (a, b) {
                    (Some(a), Some(b)) => Some(cell_delta(a, b, *kind)),
                    _ => None,
                })
                .collect()
        })
        .collect();
    Ok(StageDelta { stage: next.stage, kinds: prev.kinds.clone(), values })
}

fn cell_delta(a: &FeatureValue, b: &FeatureValue, kind: FeatureKind) -> DeltaValue {
    match (a, b, kind) {
        (FeatureValue::Rotation(a), FeatureValue::Rotation(b), _) => {
            DeltaValue::Rotation(shortest_angle(*a, *b))
        }
        (FeatureValue::Position2D(a), FeatureValue::Position2D(b), _) => {
            DeltaValue::Position2D([b[0] - a[0], b[1] - a[1]])
        }
        (FeatureValue::Position3D(a), FeatureValue::Position3D(b), _) => {
            DeltaValue::Position3D([b[0] - a[0], b[1] - a[1], b[2] - a[2]])
        }
        (FeatureValue::Discrete(a), FeatureValue::Discrete(b), FeatureKind::DiscreteState { levels }) => {
            DeltaValue::Discrete(cyclic_level_delta(*a, *b, levels))
        }
        _ => unreachable!("layout checked by caller"),
    }
}

/// Apply a delta to a single cell value.
pub(crate) fn apply_cell_delta(v: &FeatureValue, d: &DeltaValue, kind: FeatureKind) -> FeatureValue {
    match (v, d, kind) {
        (FeatureValue::Rotation(a), DeltaValue::Rotation(x), _) => FeatureValue::Rotation(wrap_angle(a + x)),
        (FeatureValue::Position2D(p), DeltaValue::Position2D(x), _) => {
            FeatureValue::Position2D([p[0] + x[0], p[1] + x[1]])
        }
        (FeatureValue::Position3D(p), DeltaValue::Position3D(x), _) => {
            FeatureValue::Position3D([p[0] + x[0], p[1] + x[1], p[2] + x[2]])
        }
        (FeatureValue::Discrete(l), DeltaValue::Discrete(x), FeatureKind::DiscreteState { levels }) => {
            FeatureValue::Discrete((i64::from(*l) + x).rem_euclid(i64::from(levels)) as u32)
        }
        _ => unreachable!("layout checked by caller"),
    }
}

/// Reconstruct `S_T` from `S_0` and consecutive deltas `1..=T`.
pub fn accumulate(deltas: &[StageDelta], s0: &WorldSnapshot) -> Result<WorldSnapshot> {
    let mut world = s0.clone();
    for d in deltas {
        if d.stage != world.stage + 1 {
            return Err(Error::Structure(format!(
                "expected delta for stage {}, found {}",
                world.stage + 1,
                d.stage
            )));
        }
        if d.kinds != world.kinds || d.values.len() != world.values.len() {
            return Err(Error::Structure("delta layout differs from snapshot".into()));
        }
        for (n, row) in d.values.iter().enumerate() {
            for (k, cell) in row.iter().enumerate() {
                match (&world.values[n][k], cell) {
                    (Some(v), Some(dv)) => {
                        world.values[n][k] = Some(apply_cell_delta(v, dv, world.kinds[k]));
                    }
                    (None, None) => {}
                    _ => {
                        return Err(Error::Structure(format!(
                            "absence pattern differs at object {n} slot {k}"
                        )))
                    }
                }
            }
        }
        world.stage = d.stage;
    }
    Ok(world)
}

/// Length-`T` allocation of actions `0..=Q` to stages; action 0 is the
/// control arm. Stage `t` (1-based) is entry `t − 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSequence {
    actions: Vec<usize>,
    signals: usize,
}

impl ActionSequence {
    /// Validates that every action in `0..=signals` occurs at least once.
    pub fn new(actions: Vec<usize>, signals: usize) -> Result<Self> {
        let seq = Self::unchecked(actions, signals)?;
        if let Some(q) = seq.counts().iter().position(|&c| c == 0) {
            return Err(Error::Allocation(format!("action {q} never occurs")));
        }
        Ok(seq)
    }

    /// Only range-checks the entries; some actions may be missing.
    pub fn unchecked(actions: Vec<usize>, signals: usize) -> Result<Self> {
        if let Some(&a) = actions.iter().find(|&&a| a > signals) {
            return Err(Error::ActionOutOfRange { action: a, signals });
        }
        Ok(Self { actions, signals })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Number of signals `Q`.
    pub fn signals(&self) -> usize {
        self.signals
    }

    /// `n_0, …, n_Q`.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.signals + 1];
        for &a in &self.actions {
            c[a] += 1;
        }
        c
    }

    pub fn count(&self, action: usize) -> usize {
        self.actions.iter().filter(|&&a| a == action).count()
    }

    pub(crate) fn from_raw(actions: Vec<usize>, signals: usize) -> Self {
        Self { actions, signals }
    }
}

/// The objects actually driven by the agent's signals, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub body_set: BTreeSet<usize>,
    pub effects: EffectTable,
}

impl GroundTruth {
    pub fn new(body_set: BTreeSet<usize>, effects: EffectTable, objects: usize) -> Result<Self> {
        if let Some(&id) = body_set.iter().find(|&&id| id >= objects) {
            return Err(Error::ObjectOutOfRange { id, objects });
        }
        if let Some(e) = effects.iter().find(|e| !body_set.contains(&e.object)) {
            return Err(Error::Structure(format!(
                "effect targets object {} outside the body set",
                e.object
            )));
        }
        Ok(Self { body_set, effects })
    }
}
