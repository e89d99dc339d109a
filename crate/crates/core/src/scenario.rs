//! Task worlds T0–T12: object layouts, hidden ground truth, other-agent
//! assignments and the optional mirror.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{feature_columns, wrap_angle, FeatureKind, FeatureValue, GroundTruth, WorldSnapshot};
use crate::seed::{rng_for, stream};
use crate::sim::NoiseConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    T0,
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
    T11,
    T12,
}

impl TaskId {
    pub const ALL: [TaskId; 13] = [
        TaskId::T0,
        TaskId::T1,
        TaskId::T2,
        TaskId::T3,
        TaskId::T4,
        TaskId::T5,
        TaskId::T6,
        TaskId::T7,
        TaskId::T8,
        TaskId::T9,
        TaskId::T10,
        TaskId::T11,
        TaskId::T12,
    ];
    pub const BASIC: [TaskId; 9] = [
        TaskId::T0,
        TaskId::T1,
        TaskId::T2,
        TaskId::T3,
        TaskId::T4,
        TaskId::T5,
        TaskId::T6,
        TaskId::T7,
        TaskId::T8,
    ];
    pub const MIRROR: [TaskId; 4] = [TaskId::T9, TaskId::T10, TaskId::T11, TaskId::T12];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn has_mirror(self) -> bool {
        self.index() >= 9
    }

    /// The mirror tasks reuse the layouts of T1–T4.
    pub fn base_layout(self) -> TaskId {
        if self.has_mirror() {
            TaskId::ALL[self.index() - 8]
        } else {
            self
        }
    }

    /// Feature slots of the task. Mixed tasks give each object exactly one
    /// of these slots.
    pub fn slots(self, pose_levels: u32) -> Vec<FeatureKind> {
        let light = FeatureKind::DiscreteState { levels: 2 };
        match self.base_layout() {
            TaskId::T0 => vec![FeatureKind::DiscreteState { levels: pose_levels }],
            TaskId::T1 => vec![FeatureKind::Rotation],
            TaskId::T2 => vec![FeatureKind::Position2D],
            TaskId::T3 => vec![FeatureKind::Position3D],
            TaskId::T4 => vec![light],
            TaskId::T5 => vec![FeatureKind::Position2D, FeatureKind::Position3D],
            TaskId::T6 => vec![FeatureKind::Position2D, light],
            TaskId::T7 => vec![FeatureKind::Position3D, light],
            TaskId::T8 => vec![FeatureKind::Position2D, FeatureKind::Position3D, light],
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.index())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let idx = s
            .trim()
            .strip_prefix(['T', 't'])
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&i| i < TaskId::ALL.len())
            .ok_or_else(|| Error::UnknownTask(s.to_string()))?;
        Ok(TaskId::ALL[idx])
    }
}

impl Serialize for TaskId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TaskId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned room the objects live in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Arena {
    fn default() -> Self {
        Arena { min: [0.0; 3], max: [5.0; 3] }
    }
}

impl Arena {
    pub fn half_extent(&self, axis: usize) -> f64 {
        (self.max[axis] - self.min[axis]) / 2.0
    }

    pub fn contains_xy(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        [0, 1, 2].map(|a| rng.random_range(self.min[a]..=self.max[a]))
    }
}

/// What one signal firing does to one feature cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum EffectChange {
    Rotate(f64),
    Translate2D([f64; 2]),
    Translate3D([f64; 3]),
    /// Cyclic advance of a discrete level (a light toggle when `levels == 2`).
    Advance(i64),
    /// Drive a discrete feature to a level; no change when already there
    /// (a light that is already on cannot be turned on).
    SetLevel(u32),
}

impl EffectChange {
    pub fn fits(&self, kind: FeatureKind) -> bool {
        matches!(
            (self, kind),
            (EffectChange::Rotate(_), FeatureKind::Rotation)
                | (EffectChange::Translate2D(_), FeatureKind::Position2D)
                | (EffectChange::Translate3D(_), FeatureKind::Position3D)
                | (EffectChange::Advance(_), FeatureKind::DiscreteState { .. })
                | (EffectChange::SetLevel(_), FeatureKind::DiscreteState { .. })
        )
    }

    /// Magnitudes of the continuous components; empty for discrete changes.
    pub fn continuous_magnitudes(&self) -> Vec<f64> {
        match *self {
            EffectChange::Rotate(a) => vec![a.abs()],
            EffectChange::Translate2D(v) => v.iter().map(|x| x.abs()).collect(),
            EffectChange::Translate3D(v) => v.iter().map(|x| x.abs()).collect(),
            EffectChange::Advance(_) | EffectChange::SetLevel(_) => vec![],
        }
    }

    fn is_nonzero(&self) -> bool {
        match *self {
            EffectChange::Rotate(a) => a != 0.0,
            EffectChange::Translate2D(v) => v.iter().any(|&x| x != 0.0),
            EffectChange::Translate3D(v) => v.iter().any(|&x| x != 0.0),
            EffectChange::Advance(s) => s != 0,
            EffectChange::SetLevel(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub object: usize,
    pub slot: usize,
    pub change: EffectChange,
}

/// Per-signal effect lists; entry `q − 1` belongs to signal `q`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    signals: Vec<Vec<Effect>>,
}

impl EffectTable {
    pub fn new(signals: Vec<Vec<Effect>>) -> Result<Self> {
        if let Some(e) = signals.iter().flatten().find(|e| !e.change.is_nonzero()) {
            return Err(Error::Config(format!("zero-magnitude effect {e:?}")));
        }
        Ok(Self { signals })
    }

    /// A table with `signals` signals that control nothing.
    pub fn empty(signals: usize) -> Self {
        Self { signals: vec![Vec::new(); signals] }
    }

    pub fn signals(&self) -> usize {
        self.signals.len()
    }

    /// Effects of signal `q` (1-based). Action 0 has none.
    pub fn for_signal(&self, q: usize) -> &[Effect] {
        if q == 0 {
            &[]
        } else {
            &self.signals[q - 1]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Effect> {
        self.signals.iter().flatten()
    }

    pub fn controlled_objects(&self) -> BTreeSet<usize> {
        self.iter().map(|e| e.object).collect()
    }

    pub fn mean_continuous_magnitude(&self) -> Option<f64> {
        let mags: Vec<f64> = self.iter().flat_map(|e| e.change.continuous_magnitudes()).collect();
        (!mags.is_empty()).then(|| mags.iter().sum::<f64>() / mags.len() as f64)
    }
}

/// Vertical mirror surface: a line in the horizontal plane with a unit
/// normal. `side` selects which half-space faces the mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorPlane {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub side: i8,
}

impl MirrorPlane {
    pub fn new(point: [f64; 2], normal: [f64; 2], side: i8) -> Result<Self> {
        let len = normal[0].hypot(normal[1]);
        if !(len.is_finite() && len > 0.0) {
            return Err(Error::Config("mirror normal must be nonzero".into()));
        }
        if side != 1 && side != -1 {
            return Err(Error::Config("mirror side must be ±1".into()));
        }
        Ok(Self { point, normal: [normal[0] / len, normal[1] / len], side })
    }

    /// Random location inside the arena, random horizontal direction.
    pub fn random(arena: &Arena, rng: &mut impl Rng) -> Self {
        let point = [
            rng.random_range(arena.min[0]..=arena.max[0]),
            rng.random_range(arena.min[1]..=arena.max[1]),
        ];
        let angle = rng.random_range(0.0..TAU);
        let side = if rng.random_bool(0.5) { 1 } else { -1 };
        Self { point, normal: [angle.cos(), angle.sin()], side }
    }

    fn signed_distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.point[0]) * self.normal[0] + (p[1] - self.point[1]) * self.normal[1]
    }

    /// Whether a location lies in the half that faces the mirror (points
    /// on the surface count as facing it).
    pub fn faces(&self, p: [f64; 2]) -> bool {
        f64::from(self.side) * self.signed_distance(p) >= 0.0
    }

    pub fn reflect_point(&self, p: [f64; 2]) -> [f64; 2] {
        let d = self.signed_distance(p);
        [p[0] - 2.0 * d * self.normal[0], p[1] - 2.0 * d * self.normal[1]]
    }

    /// Reflect a heading across the mirror line.
    pub fn reflect_angle(&self, a: f64) -> f64 {
        let line = self.normal[1].atan2(self.normal[0]) + FRAC_PI_2;
        wrap_angle(2.0 * line - a)
    }

    pub fn reflect_value(&self, v: &FeatureValue) -> FeatureValue {
        match *v {
            FeatureValue::Rotation(a) => FeatureValue::Rotation(self.reflect_angle(a)),
            FeatureValue::Position2D(p) => FeatureValue::Position2D(self.reflect_point(p)),
            FeatureValue::Position3D([x, y, z]) => {
                let [rx, ry] = self.reflect_point([x, y]);
                FeatureValue::Position3D([rx, ry, z])
            }
            FeatureValue::Discrete(l) => FeatureValue::Discrete(l),
        }
    }
}

/// An image object that tracks `source` through the mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub source: usize,
    pub image: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mirror {
    pub plane: MirrorPlane,
    pub reflections: Vec<Reflection>,
}

/// A non-body object driven by another agent. `cycle` holds one unit-scale
/// delta per flattened feature column for each step of the periodic
/// pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtherAgent {
    pub object: usize,
    pub cycle: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: TaskId,
    /// N, before any mirror reflections are added.
    pub objects: usize,
    /// Q.
    pub signals: usize,
    /// T.
    pub stages: usize,
    /// n_0..n_Q; balanced when absent.
    #[serde(default)]
    pub counts: Option<Vec<usize>>,
    pub body_fraction: f64,
    pub noise: NoiseConfig,
    pub effect_range: [f64; 2],
    /// Signals control between `pairs_per_signal[0]` and `[1]` cells.
    pub pairs_per_signal: [usize; 2],
    pub arena: Arena,
    pub pose_levels: u32,
    /// Share of non-body objects that other agents drive.
    pub other_agent_fraction: f64,
    pub n2_period: usize,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            task: TaskId::T8,
            objects: 50,
            signals: 5,
            stages: 200,
            counts: None,
            body_fraction: 0.2,
            noise: NoiseConfig::default(),
            effect_range: [0.5, 2.0],
            pairs_per_signal: [1, 3],
            arena: Arena::default(),
            pose_levels: 8,
            other_agent_fraction: 0.2,
            n2_period: 4,
            seed: 0,
        }
    }
}

impl TaskConfig {
    pub fn for_task(task: TaskId) -> Self {
        TaskConfig { task, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.objects == 0 {
            return fail("at least one object is required".into());
        }
        if self.signals == 0 {
            return fail("at least one signal is required".into());
        }
        if !(self.body_fraction > 0.0 && self.body_fraction <= 1.0) {
            return fail(format!("body fraction {} not in (0, 1]", self.body_fraction));
        }
        let [lo, hi] = self.effect_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("effect range [{lo}, {hi}] must satisfy 0 < lo <= hi"));
        }
        let [plo, phi] = self.pairs_per_signal;
        if plo == 0 || plo > phi {
            return fail("pairs per signal must satisfy 1 <= lo <= hi".into());
        }
        if (0..3).any(|a| self.arena.min[a] >= self.arena.max[a]) {
            return fail("arena min must be below max on every axis".into());
        }
        if self.pose_levels < 2 {
            return fail("poses need at least two levels".into());
        }
        if !(0.0..=1.0).contains(&self.other_agent_fraction) {
            return fail("other-agent fraction must be in [0, 1]".into());
        }
        if self.n2_period == 0 {
            return fail("N2 period must be at least 1".into());
        }
        self.noise.validate()?;
        self.action_counts()?;
        Ok(())
    }

    /// n_0..n_Q, either as configured or balanced.
    pub fn action_counts(&self) -> Result<Vec<usize>> {
        match &self.counts {
            Some(c) => {
                if c.len() != self.signals + 1 {
                    return Err(Error::Config(format!(
                        "{} counts given for {} actions",
                        c.len(),
                        self.signals + 1
                    )));
                }
                if c.iter().sum::<usize>() != self.stages {
                    return Err(Error::Config("counts must sum to the number of stages".into()));
                }
                if c.contains(&0) {
                    return Err(Error::Config("every action needs at least one stage".into()));
                }
                Ok(c.clone())
            }
            None => crate::design::balanced_counts(self.stages, self.signals),
        }
    }

    pub fn body_count(&self) -> usize {
        ((self.body_fraction * self.objects as f64).round() as usize).clamp(1, self.objects)
    }
}

/// A generated world: initial snapshot, hidden truth and everything the
/// simulator needs to advance it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: TaskConfig,
    pub initial: WorldSnapshot,
    pub truth: GroundTruth,
    /// Spatial location of every object, used for the mirror side test.
    pub anchors: Vec<[f64; 3]>,
    pub other_agents: Vec<OtherAgent>,
    pub mirror: Option<Mirror>,
    /// Mean |continuous effect component|; the unit for N1/N2 intensity.
    pub reference_magnitude: f64,
}

impl Scenario {
    pub fn kinds(&self) -> &[FeatureKind] {
        self.initial.kinds()
    }

    pub fn objects(&self) -> usize {
        self.initial.objects()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Build the world for `cfg`. A pure function of the configuration
/// (including its seed).
pub fn generate_task(cfg: &TaskConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[stream::SCENARIO]);
    let kinds = cfg.task.slots(cfg.pose_levels);
    let n = cfg.objects;

    let mut rows = Vec::with_capacity(n);
    let mut anchors = Vec::with_capacity(n);
    for _ in 0..n {
        let slot = rng.random_range(0..kinds.len());
        let anchor = cfg.arena.sample(&mut rng);
        let value = match kinds[slot] {
            FeatureKind::Rotation => FeatureValue::Rotation(rng.random_range(0.0..TAU)),
            FeatureKind::Position2D => FeatureValue::Position2D([anchor[0], anchor[1]]),
            FeatureKind::Position3D => FeatureValue::Position3D(anchor),
            FeatureKind::DiscreteState { levels } => FeatureValue::Discrete(rng.random_range(0..levels)),
        };
        let mut row = vec![None; kinds.len()];
        row[slot] = Some(value);
        rows.push(row);
        anchors.push(match kinds[slot] {
            FeatureKind::Position2D => [anchor[0], anchor[1], cfg.arena.min[2]],
            _ => anchor,
        });
    }
    let initial = WorldSnapshot::new(0, kinds.clone(), rows)?;

    let controllable = initial.rows().iter().flatten().filter(|c| c.is_some()).count();
    if cfg.signals > controllable {
        return Err(Error::Config(format!(
            "{} signals but only {controllable} controllable feature cells",
            cfg.signals
        )));
    }

    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let body: Vec<usize> = ids[..cfg.body_count()].to_vec();
    let mut bystanders: Vec<usize> = ids[cfg.body_count()..].to_vec();
    bystanders.sort_unstable();

    let effects = sample_effects(cfg, &initial, &body, &mut rng)?;
    let body_set: BTreeSet<usize> = body.iter().copied().collect();
    let truth = GroundTruth::new(body_set, effects, n)?;

    let columns = feature_columns(&kinds);
    let agent_count = (cfg.other_agent_fraction * bystanders.len() as f64).round() as usize;
    let mut agents: Vec<usize> = bystanders.choose_multiple(&mut rng, agent_count).copied().collect();
    agents.sort_unstable();
    let other_agents = agents
        .into_iter()
        .map(|object| OtherAgent {
            object,
            cycle: (0..cfg.n2_period)
                .map(|_| {
                    columns
                        .iter()
                        .map(|c| match kinds[c.slot] {
                            FeatureKind::DiscreteState { .. } => f64::from(rng.random_range(-1i32..=1)),
                            _ => rng.random_range(-1.0..=1.0),
                        })
                        .collect()
                })
                .collect(),
        })
        .collect();

    let reference_magnitude = truth
        .effects
        .mean_continuous_magnitude()
        .unwrap_or((cfg.effect_range[0] + cfg.effect_range[1]) / 2.0);

    let scenario = Scenario {
        config: cfg.clone(),
        initial,
        truth,
        anchors,
        other_agents,
        mirror: None,
        reference_magnitude,
    };

    if cfg.task.has_mirror() {
        let mut mrng = rng_for(cfg.seed, &[stream::MIRROR]);
        let plane = MirrorPlane::random(&cfg.arena, &mut mrng);
        apply_mirror(&scenario, plane)
    } else {
        Ok(scenario)
    }
}

/// Assign every signal at least one (object, slot) cell, every body object
/// at least one signal, and draw the per-firing change of each cell.
pub fn sample_effects(
    cfg: &TaskConfig,
    world: &WorldSnapshot,
    body: &[usize],
    rng: &mut impl Rng,
) -> Result<EffectTable> {
    if body.is_empty() {
        return Err(Error::Empty("body set"));
    }
    let kinds = world.kinds();
    let cells: Vec<(usize, usize)> = body
        .iter()
        .flat_map(|&o| (0..kinds.len()).filter(move |&k| world.get(o, k).is_some()).map(move |k| (o, k)))
        .collect();
    if cells.is_empty() {
        return Err(Error::Config("body objects carry no features".into()));
    }
    let q_count = cfg.signals;
    let mut assigned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); q_count];

    let cells_of = |o: usize| -> Vec<(usize, usize)> { cells.iter().copied().filter(|c| c.0 == o).collect() };

    let mut order = body.to_vec();
    order.shuffle(rng);
    for &o in &order {
        let q = rng.random_range(0..q_count);
        let cell = *cells_of(o).choose(rng).expect("body object has a feature");
        assigned[q].push(cell);
    }
    for list in assigned.iter_mut() {
        if list.is_empty() {
            list.push(*cells.choose(rng).expect("nonempty"));
        }
    }
    let [lo, hi] = cfg.pairs_per_signal;
    for list in assigned.iter_mut() {
        let target = rng.random_range(lo..=hi);
        let mut attempts = 0;
        while list.len() < target && attempts < 8 * cells.len() {
            attempts += 1;
            let c = *cells.choose(rng).expect("nonempty");
            if !list.contains(&c) {
                list.push(c);
            }
        }
    }

    let signals = assigned
        .into_iter()
        .map(|list| {
            list.into_iter()
                .map(|(object, slot)| Effect {
                    object,
                    slot,
                    change: sample_change(kinds[slot], cfg.effect_range, rng),
                })
                .collect()
        })
        .collect();
    EffectTable::new(signals)
}

fn signed_magnitude(range: [f64; 2], rng: &mut impl Rng) -> f64 {
    let m = rng.random_range(range[0]..=range[1]);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn sample_change(kind: FeatureKind, range: [f64; 2], rng: &mut impl Rng) -> EffectChange {
    match kind {
        FeatureKind::Rotation => EffectChange::Rotate(signed_magnitude(range, rng)),
        FeatureKind::Position2D => EffectChange::Translate2D([0, 1].map(|_| signed_magnitude(range, rng))),
        FeatureKind::Position3D => EffectChange::Translate3D([0, 1, 2].map(|_| signed_magnitude(range, rng))),
        FeatureKind::DiscreteState { levels: 2 } => EffectChange::Advance(1),
        FeatureKind::DiscreteState { levels } => {
            // steps stay strictly below half a cycle so the cyclic delta
            // reads back as the step itself
            let max_step = i64::from((levels - 1) / 2).max(1);
            let step = rng.random_range(1..=max_step);
            EffectChange::Advance(if rng.random_bool(0.5) { step } else { -step })
        }
    }
}

/// Duplicate every object on the mirror-facing side as a reflection. Images
/// of body objects join the body set.
pub fn apply_mirror(scenario: &Scenario, plane: MirrorPlane) -> Result<Scenario> {
    if scenario.mirror.is_some() {
        return Err(Error::Config("scenario already has a mirror".into()));
    }
    let plane = MirrorPlane::new(plane.point, plane.normal, plane.side)?;
    if !scenario.config.arena.contains_xy(plane.point) {
        return Err(Error::MirrorOutsideArena(format!("{:?}", plane.point)));
    }
    let mut out = scenario.clone();
    let originals = scenario.objects();
    let mut reflections = Vec::new();
    for source in 0..originals {
        let a = scenario.anchors[source];
        if !plane.faces([a[0], a[1]]) {
            continue;
        }
        let image = out.initial.objects();
        let row = scenario.initial.rows()[source]
            .iter()
            .map(|c| c.as_ref().map(|v| plane.reflect_value(v)))
            .collect();
        out.initial.push_object(row);
        let [rx, ry] = plane.reflect_point([a[0], a[1]]);
        out.anchors.push([rx, ry, a[2]]);
        if scenario.truth.body_set.contains(&source) {
            out.truth.body_set.insert(image);
        }
        reflections.push(Reflection { source, image });
    }
    out.mirror = Some(Mirror { plane, reflections });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(task: TaskId) -> TaskConfig {
        TaskConfig { task, objects: 20, seed: 11, ..Default::default() }
    }

    #[test]
    fn task_ids_round_trip_through_strings() {
        for t in TaskId::ALL {
            assert_eq!(t.to_string().parse::<TaskId>().unwrap(), t);
        }
        assert!("T13".parse::<TaskId>().is_err());
        assert!("X2".parse::<TaskId>().is_err());
    }

    #[test]
    fn lights_task_has_only_discrete_state() {
        let s = generate_task(&small(TaskId::T4)).unwrap();
        assert_eq!(s.kinds(), &[FeatureKind::DiscreteState { levels: 2 }]);
        assert!(s.initial.rows().iter().all(|r| r[0].is_some()));
    }

    #[test]
    fn dogs_task_has_only_2d_positions() {
        let s = generate_task(&small(TaskId::T2)).unwrap();
        assert_eq!(s.kinds(), &[FeatureKind::Position2D]);
        for row in s.initial.rows() {
            assert!(matches!(row[0], Some(FeatureValue::Position2D(_))));
        }
    }

    #[test]
    fn mixed_task_gives_each_object_one_feature() {
        let s = generate_task(&small(TaskId::T8)).unwrap();
        assert_eq!(s.kinds().len(), 3);
        for row in s.initial.rows() {
            assert_eq!(row.iter().filter(|c| c.is_some()).count(), 1);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_task(&small(TaskId::T8)).unwrap();
        let b = generate_task(&small(TaskId::T8)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_task(&TaskConfig { seed: 12, ..small(TaskId::T8) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn truth_matches_effects() {
        for task in TaskId::BASIC {
            let s = generate_task(&small(task)).unwrap();
            assert_eq!(s.truth.effects.controlled_objects(), s.truth.body_set);
            assert_eq!(s.truth.body_set.len(), 4);
            for q in 1..=s.config.signals {
                assert!(!s.truth.effects.for_signal(q).is_empty());
            }
            for e in s.truth.effects.iter() {
                assert!(e.change.fits(s.kinds()[e.slot]));
                for m in e.change.continuous_magnitudes() {
                    assert!((0.5..=2.0).contains(&m));
                }
            }
        }
    }

    #[test]
    fn other_agents_never_include_body_objects() {
        for seed in 0..20 {
            let s = generate_task(&TaskConfig { seed, ..small(TaskId::T2) }).unwrap();
            assert_eq!(s.other_agents.len(), 3);
            for a in &s.other_agents {
                assert!(!s.truth.body_set.contains(&a.object));
                assert_eq!(a.cycle.len(), 4);
            }
        }
    }

    #[test]
    fn single_signal_single_drone() {
        let cfg = TaskConfig {
            task: TaskId::T3,
            objects: 1,
            signals: 1,
            stages: 10,
            body_fraction: 1.0,
            pairs_per_signal: [1, 1],
            ..Default::default()
        };
        let s = generate_task(&cfg).unwrap();
        let effects = s.truth.effects.for_signal(1);
        assert_eq!(effects.len(), 1);
        assert!(matches!(effects[0].change, EffectChange::Translate3D(_)));
    }

    #[test]
    fn more_signals_than_body_objects_share_owners() {
        let cfg = TaskConfig {
            task: TaskId::T2,
            objects: 10,
            signals: 3,
            body_fraction: 0.2,
            pairs_per_signal: [1, 1],
            ..Default::default()
        };
        for seed in 0..10 {
            let s = generate_task(&TaskConfig { seed, ..cfg.clone() }).unwrap();
            let owners: Vec<usize> = (1..=3).map(|q| s.truth.effects.for_signal(q)[0].object).collect();
            let distinct: BTreeSet<_> = owners.iter().collect();
            assert!(distinct.len() < owners.len());
        }
    }

    #[test]
    fn sample_effects_rejects_empty_body() {
        let s = generate_task(&small(TaskId::T2)).unwrap();
        let mut rng = rng_for(0, &[]);
        assert!(matches!(
            sample_effects(&s.config, &s.initial, &[], &mut rng),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate_task(&TaskConfig { objects: 0, ..Default::default() }).is_err());
        assert!(generate_task(&TaskConfig { effect_range: [0.0, 1.0], ..Default::default() }).is_err());
        assert!(generate_task(&TaskConfig { counts: Some(vec![1, 1]), ..Default::default() }).is_err());
        let too_many = TaskConfig { task: TaskId::T2, objects: 2, signals: 3, stages: 20, ..Default::default() };
        assert!(matches!(generate_task(&too_many), Err(Error::Config(_))));
    }

    #[test]
    fn reflection_is_an_involution_with_fixed_points_on_the_plane() {
        let plane = MirrorPlane::new([2.0, 1.0], [1.0, 1.0], 1).unwrap();
        let p = [3.5, -0.25];
        let r = plane.reflect_point(plane.reflect_point(p));
        assert_abs_diff_eq!(r[0], p[0], epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], p[1], epsilon = 1e-12);
        let on = [2.0 + 1.0, 1.0 - 1.0];
        let r = plane.reflect_point(on);
        assert_abs_diff_eq!(r[0], on[0], epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], on[1], epsilon = 1e-12);
        let a = 0.7;
        assert_abs_diff_eq!(plane.reflect_angle(plane.reflect_angle(a)), a, epsilon = 1e-12);
    }

    #[test]
    fn mirror_task_extends_base_layout() {
        let base = generate_task(&small(TaskId::T2)).unwrap();
        let mirrored = generate_task(&small(TaskId::T10)).unwrap();
        assert_eq!(mirrored.kinds(), base.kinds());
        let m = mirrored.mirror.as_ref().unwrap();
        assert_eq!(mirrored.objects(), 20 + m.reflections.len());
        for r in &m.reflections {
            let a = mirrored.anchors[r.source];
            assert!(m.plane.faces([a[0], a[1]]));
            assert_eq!(
                mirrored.truth.body_set.contains(&r.image),
                mirrored.truth.body_set.contains(&r.source)
            );
        }
        assert!(base.mirror.is_none());
    }

    #[test]
    fn mirror_preserves_pairwise_distances() {
        let s = generate_task(&small(TaskId::T2)).unwrap();
        let plane = MirrorPlane::new([2.5, 2.5], [0.6, 0.8], -1).unwrap();
        let m = apply_mirror(&s, plane).unwrap();
        let pos = |o: usize| match m.initial.get(o, 0) {
            Some(FeatureValue::Position2D(p)) => *p,
            _ => unreachable!(),
        };
        let refl = &m.mirror.as_ref().unwrap().reflections;
        for a in refl {
            for b in refl {
                let d0 = (pos(a.source)[0] - pos(b.source)[0]).hypot(pos(a.source)[1] - pos(b.source)[1]);
                let d1 = (pos(a.image)[0] - pos(b.image)[0]).hypot(pos(a.image)[1] - pos(b.image)[1]);
                assert_abs_diff_eq!(d0, d1, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mirror_outside_arena_is_rejected() {
        let s = generate_task(&small(TaskId::T2)).unwrap();
        let plane = MirrorPlane::new([50.0, 2.0], [1.0, 0.0], 1).unwrap();
        assert!(matches!(apply_mirror(&s, plane), Err(Error::MirrorOutsideArena(_))));
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = generate_task(&small(TaskId::T11)).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
