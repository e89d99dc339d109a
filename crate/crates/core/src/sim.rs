//! One-stage world dynamics and the four noise sources.
//!
//! * N1 environment: zero-mean uniform drift on every continuous component,
//!   random level flips on discrete ones.
//! * N2 other agents: extra motion on a fixed set of non-body objects.
//! * N3 action failure: the whole signal is dropped for the stage.
//! * N4 sensing flaw: a corrupted copy of the world is what inference sees.
//!
//! N1/N2 intensities are ratios to the scenario's mean effect magnitude:
//! a drift component is uniform on `±2·intensity·m`, so its mean absolute
//! value is `intensity·m`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{feature_columns, FeatureKind, FeatureValue, WorldSnapshot};
use crate::scenario::{Arena, EffectChange, EffectTable, OtherAgent, Scenario};
use crate::seed::{rng_for, stream, SimRng};

/// Per-stage probability of a random discrete flip per unit of N1/N2
/// intensity.
pub const DISCRETE_FLIP_RATE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum N2Pattern {
    Random,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub n1_intensity: f64,
    pub n2_intensity: f64,
    pub n2_pattern: N2Pattern,
    pub n3_failure_prob: f64,
    pub n4_sensing_error: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            n1_intensity: 0.2,
            n2_intensity: 0.5,
            n2_pattern: N2Pattern::Random,
            n3_failure_prob: 0.05,
            n4_sensing_error: 0.1,
        }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        NoiseConfig {
            n1_intensity: 0.0,
            n2_intensity: 0.0,
            n2_pattern: N2Pattern::Random,
            n3_failure_prob: 0.0,
            n4_sensing_error: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.n1_intensity) || !ok(self.n2_intensity) || !ok(self.n4_sensing_error) {
            return Err(Error::Config("noise intensities must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.n3_failure_prob) {
            return Err(Error::Config("N3 failure probability must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Uniform on `±2·scale`; mean absolute value is `scale`.
fn drift(scale: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    2.0 * scale * (2.0 * u - 1.0)
}

fn advance_level(level: u32, step: i64, levels: u32) -> u32 {
    (i64::from(level) + step).rem_euclid(i64::from(levels)) as u32
}

/// Apply every effect of signal `q`. Action 0 changes nothing.
pub fn apply_signal(world: &mut WorldSnapshot, q: usize, effects: &EffectTable) -> Result<()> {
    if q > effects.signals() {
        return Err(Error::ActionOutOfRange { action: q, signals: effects.signals() });
    }
    for e in effects.for_signal(q) {
        let kind = world.kinds()[e.slot];
        let current = *world
            .get(e.object, e.slot)
            .ok_or_else(|| Error::Structure(format!("effect on absent cell {}/{}", e.object, e.slot)))?;
        let next = match (current, e.change, kind) {
            (FeatureValue::Rotation(a), EffectChange::Rotate(d), _) => FeatureValue::Rotation(a + d),
            (FeatureValue::Position2D(p), EffectChange::Translate2D(d), _) => {
                FeatureValue::Position2D([p[0] + d[0], p[1] + d[1]])
            }
            (FeatureValue::Position3D(p), EffectChange::Translate3D(d), _) => {
                FeatureValue::Position3D([p[0] + d[0], p[1] + d[1], p[2] + d[2]])
            }
            (FeatureValue::Discrete(l), EffectChange::Advance(s), FeatureKind::DiscreteState { levels }) => {
                FeatureValue::Discrete(advance_level(l, s, levels))
            }
            (FeatureValue::Discrete(_), EffectChange::SetLevel(t), FeatureKind::DiscreteState { levels }) => {
                // already at the target level: nothing happens
                FeatureValue::Discrete(t.min(levels - 1))
            }
            _ => return Err(Error::Structure(format!("effect {:?} does not fit {kind:?}", e.change))),
        };
        world.set(e.object, e.slot, next);
    }
    Ok(())
}

fn perturb_cell(value: FeatureValue, kind: FeatureKind, scale: f64, flip_prob: f64, rng: &mut impl Rng) -> FeatureValue {
    match (value, kind) {
        (FeatureValue::Rotation(a), _) => FeatureValue::Rotation(a + drift(scale, rng)),
        (FeatureValue::Position2D(p), _) => FeatureValue::Position2D(p.map(|x| x + drift(scale, rng))),
        (FeatureValue::Position3D(p), _) => FeatureValue::Position3D(p.map(|x| x + drift(scale, rng))),
        (FeatureValue::Discrete(l), FeatureKind::DiscreteState { levels }) => {
            let flip = rng.random::<f64>() < flip_prob;
            let step = if rng.random_bool(0.5) { 1 } else { -1 };
            if flip {
                FeatureValue::Discrete(advance_level(l, step, levels))
            } else {
                FeatureValue::Discrete(l)
            }
        }
        (v, _) => v,
    }
}

/// N1: environmental drift on every present cell. The number of random
/// draws does not depend on `intensity`.
pub fn inject_environment(world: &mut WorldSnapshot, intensity: f64, reference: f64, rng: &mut impl Rng) {
    let scale = intensity * reference;
    let flip_prob = (intensity * DISCRETE_FLIP_RATE).min(1.0);
    let kinds = world.kinds().to_vec();
    for n in 0..world.objects() {
        for (k, &kind) in kinds.iter().enumerate() {
            if let Some(&v) = world.get(n, k) {
                world.set(n, k, perturb_cell(v, kind, scale, flip_prob, rng));
            }
        }
    }
}

/// N2: other-agent motion for the stage being produced (`stage ≥ 1`).
pub fn inject_other_agents(
    world: &mut WorldSnapshot,
    agents: &[OtherAgent],
    intensity: f64,
    pattern: N2Pattern,
    reference: f64,
    stage: usize,
    rng: &mut impl Rng,
) {
    let scale = intensity * reference;
    let flip_prob = (intensity * DISCRETE_FLIP_RATE).min(1.0);
    let kinds = world.kinds().to_vec();
    let columns = feature_columns(&kinds);
    for agent in agents {
        for (k, &kind) in kinds.iter().enumerate() {
            let Some(&v) = world.get(agent.object, k) else { continue };
            let next = match pattern {
                N2Pattern::Random => perturb_cell(v, kind, scale, flip_prob, rng),
                N2Pattern::Periodic => {
                    let row = &agent.cycle[stage.saturating_sub(1) % agent.cycle.len()];
                    let unit: Vec<f64> = columns
                        .iter()
                        .zip(row)
                        .filter(|(c, _)| c.slot == k)
                        .map(|(_, &u)| u)
                        .collect();
                    // uniform(−1, 1) cycle entries have mean |u| = 1/2
                    let s = 2.0 * scale;
                    match v {
                        FeatureValue::Rotation(a) => FeatureValue::Rotation(a + s * unit[0]),
                        FeatureValue::Position2D(p) => FeatureValue::Position2D([p[0] + s * unit[0], p[1] + s * unit[1]]),
                        FeatureValue::Position3D(p) => FeatureValue::Position3D([
                            p[0] + s * unit[0],
                            p[1] + s * unit[1],
                            p[2] + s * unit[2],
                        ]),
                        FeatureValue::Discrete(l) => match kind {
                            FeatureKind::DiscreteState { levels } if intensity > 0.0 => {
                                FeatureValue::Discrete(advance_level(l, unit[0] as i64, levels))
                            }
                            _ => FeatureValue::Discrete(l),
                        },
                    }
                }
            };
            world.set(agent.object, k, next);
        }
    }
}

/// Recompute every mirror image from its source.
pub fn sync_reflections(world: &mut WorldSnapshot, scenario: &Scenario) {
    let Some(mirror) = &scenario.mirror else { return };
    for r in &mirror.reflections {
        for k in 0..world.kinds().len() {
            if let Some(v) = world.get(r.source, k).copied() {
                world.set(r.image, k, mirror.plane.reflect_value(&v));
            }
        }
    }
}

/// N4: what the agent's sensors report. Each component is off by up to
/// `error` times the feature's half-span (arena half-extent for positions,
/// π for rotations, half the level count for discrete states, rounded to a
/// whole level). The true world is not touched.
pub fn sense(world: &WorldSnapshot, error: f64, arena: &Arena, rng: &mut impl Rng) -> WorldSnapshot {
    let mut observed = world.clone();
    let kinds = world.kinds().to_vec();
    let noise = |span: f64, rng: &mut dyn rand::RngCore| -> f64 {
        let u: f64 = rng.random();
        error * span * (2.0 * u - 1.0)
    };
    for n in 0..world.objects() {
        for (k, &kind) in kinds.iter().enumerate() {
            let Some(&v) = world.get(n, k) else { continue };
            let seen = match (v, kind) {
                (FeatureValue::Rotation(a), _) => FeatureValue::Rotation(a + noise(std::f64::consts::PI, rng)),
                (FeatureValue::Position2D(p), _) => {
                    FeatureValue::Position2D([p[0] + noise(arena.half_extent(0), rng), p[1] + noise(arena.half_extent(1), rng)])
                }
                (FeatureValue::Position3D(p), _) => FeatureValue::Position3D([
                    p[0] + noise(arena.half_extent(0), rng),
                    p[1] + noise(arena.half_extent(1), rng),
                    p[2] + noise(arena.half_extent(2), rng),
                ]),
                (FeatureValue::Discrete(l), FeatureKind::DiscreteState { levels }) => {
                    let off = noise(f64::from(levels) / 2.0, rng).round() as i64;
                    FeatureValue::Discrete(advance_level(l, off, levels))
                }
                (v, _) => v,
            };
            observed.set(n, k, seen);
        }
    }
    observed
}

/// Advance the true world by one stage under action `q`, drawing all noise
/// from a single stream.
pub fn step(
    world: &WorldSnapshot,
    q: usize,
    scenario: &Scenario,
    noise: &NoiseConfig,
    rng: &mut impl Rng,
) -> Result<WorldSnapshot> {
    let mut next = world.clone();
    let failed = rng.random::<f64>() < noise.n3_failure_prob;
    if q > scenario.truth.effects.signals() {
        return Err(Error::ActionOutOfRange { action: q, signals: scenario.truth.effects.signals() });
    }
    if !failed {
        apply_signal(&mut next, q, &scenario.truth.effects)?;
    }
    let m = scenario.reference_magnitude;
    inject_environment(&mut next, noise.n1_intensity, m, rng);
    inject_other_agents(
        &mut next,
        &scenario.other_agents,
        noise.n2_intensity,
        noise.n2_pattern,
        m,
        world.stage() + 1,
        rng,
    );
    sync_reflections(&mut next, scenario);
    Ok(next.with_stage(world.stage() + 1))
}

/// Stateful stepping with an independent stream per noise source, so that
/// changing one intensity never reshuffles the draws of another.
pub struct Simulator<'a> {
    scenario: &'a Scenario,
    noise: NoiseConfig,
    failure: SimRng,
    environment: SimRng,
    agents: SimRng,
    sensing: SimRng,
}

impl<'a> Simulator<'a> {
    pub fn new(scenario: &'a Scenario, noise: NoiseConfig, seed: u64) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            scenario,
            noise,
            failure: rng_for(seed, &[stream::FAILURE]),
            environment: rng_for(seed, &[stream::ENVIRONMENT]),
            agents: rng_for(seed, &[stream::OTHER_AGENTS]),
            sensing: rng_for(seed, &[stream::SENSING]),
        })
    }

    pub fn advance(&mut self, world: &WorldSnapshot, q: usize) -> Result<WorldSnapshot> {
        let effects = &self.scenario.truth.effects;
        if q > effects.signals() {
            return Err(Error::ActionOutOfRange { action: q, signals: effects.signals() });
        }
        let mut next = world.clone();
        let failed = self.failure.random::<f64>() < self.noise.n3_failure_prob;
        if !failed {
            apply_signal(&mut next, q, effects)?;
        }
        let m = self.scenario.reference_magnitude;
        inject_environment(&mut next, self.noise.n1_intensity, m, &mut self.environment);
        inject_other_agents(
            &mut next,
            &self.scenario.other_agents,
            self.noise.n2_intensity,
            self.noise.n2_pattern,
            m,
            world.stage() + 1,
            &mut self.agents,
        );
        sync_reflections(&mut next, self.scenario);
        Ok(next.with_stage(world.stage() + 1))
    }

    pub fn observe(&mut self, world: &WorldSnapshot) -> WorldSnapshot {
        sense(world, self.noise.n4_sensing_error, &self.scenario.config.arena, &mut self.sensing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{stage_delta, DeltaValue};
    use crate::scenario::{generate_task, Effect, TaskConfig, TaskId};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeSet;

    fn scenario(task: TaskId, noise: NoiseConfig) -> Scenario {
        generate_task(&TaskConfig { task, objects: 20, noise, seed: 3, ..Default::default() }).unwrap()
    }

    /// One Position2D object controlled by signal 1 with a fixed translation.
    fn single_dog(change: [f64; 2]) -> Scenario {
        let cfg = TaskConfig {
            task: TaskId::T2,
            objects: 1,
            signals: 1,
            stages: 10,
            body_fraction: 1.0,
            other_agent_fraction: 0.0,
            ..Default::default()
        };
        let mut s = generate_task(&cfg).unwrap();
        let effects = EffectTable::new(vec![vec![Effect {
            object: 0,
            slot: 0,
            change: EffectChange::Translate2D(change),
        }]])
        .unwrap();
        s.truth = crate::model::GroundTruth::new(BTreeSet::from([0]), effects, 1).unwrap();
        s
    }

    #[test]
    fn control_stage_without_noise_changes_nothing() {
        let s = scenario(TaskId::T8, NoiseConfig::none());
        let mut rng = rng_for(1, &[]);
        let next = step(&s.initial, 0, &s, &NoiseConfig::none(), &mut rng).unwrap();
        assert_eq!(next.stage(), 1);
        assert!(stage_delta(&s.initial, &next).unwrap().is_zero());
    }

    #[test]
    fn pure_effect_translates_exactly() {
        let s = single_dog([2.0, 0.0]);
        let mut rng = rng_for(1, &[]);
        let next = step(&s.initial, 1, &s, &NoiseConfig::none(), &mut rng).unwrap();
        let d = stage_delta(&s.initial, &next).unwrap();
        match d.get(0, 0) {
            Some(DeltaValue::Position2D([dx, dy])) => {
                assert_abs_diff_eq!(*dx, 2.0, epsilon = 1e-12);
                assert_eq!(*dy, 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        let s = single_dog([1.0, 1.0]);
        let mut rng = rng_for(1, &[]);
        assert!(matches!(
            step(&s.initial, 2, &s, &NoiseConfig::none(), &mut rng),
            Err(Error::ActionOutOfRange { action: 2, .. })
        ));
    }

    #[test]
    fn certain_failure_behaves_like_control() {
        let noise = NoiseConfig { n3_failure_prob: 1.0, ..NoiseConfig::none() };
        let s = scenario(TaskId::T8, noise);
        let mut rng = rng_for(1, &[]);
        for q in 0..=s.config.signals {
            let next = step(&s.initial, q, &s, &noise, &mut rng).unwrap();
            assert!(stage_delta(&s.initial, &next).unwrap().is_zero());
        }
    }

    #[test]
    fn turning_on_a_lit_light_does_nothing() {
        let cfg = TaskConfig { task: TaskId::T4, objects: 1, signals: 1, stages: 4, body_fraction: 1.0, ..Default::default() };
        let mut s = generate_task(&cfg).unwrap();
        let effects =
            EffectTable::new(vec![vec![Effect { object: 0, slot: 0, change: EffectChange::SetLevel(1) }]]).unwrap();
        s.truth = crate::model::GroundTruth::new(BTreeSet::from([0]), effects, 1).unwrap();
        let mut world = s.initial.clone();
        world.set(0, 0, FeatureValue::Discrete(1));
        let mut rng = rng_for(1, &[]);
        let next = step(&world, 1, &s, &NoiseConfig::none(), &mut rng).unwrap();
        assert_eq!(next.get(0, 0), Some(&FeatureValue::Discrete(1)));
        world.set(0, 0, FeatureValue::Discrete(0));
        let next = step(&world, 1, &s, &NoiseConfig::none(), &mut rng).unwrap();
        assert_eq!(next.get(0, 0), Some(&FeatureValue::Discrete(1)));
    }

    #[test]
    fn zero_intensity_noise_is_identity() {
        let s = scenario(TaskId::T8, NoiseConfig::none());
        let mut rng = rng_for(2, &[]);
        let mut w = s.initial.clone();
        inject_environment(&mut w, 0.0, 1.25, &mut rng);
        assert_eq!(w, s.initial);
        for pattern in [N2Pattern::Random, N2Pattern::Periodic] {
            inject_other_agents(&mut w, &s.other_agents, 0.0, pattern, 1.25, 1, &mut rng);
            assert_eq!(w, s.initial);
        }
        assert_eq!(sense(&s.initial, 0.0, &s.config.arena, &mut rng), s.initial);
    }

    #[test]
    fn environment_drift_is_calibrated_to_reference_magnitude() {
        // intensity 1: mean |drift| per component equals the reference
        let reference = 1.25;
        let world = WorldSnapshot::new(0, vec![FeatureKind::Position2D], vec![vec![Some(FeatureValue::Position2D([0.0, 0.0]))]])
            .unwrap();
        let mut rng = rng_for(5, &[]);
        let samples = 10_000;
        let (mut abs_sum, mut sum) = (0.0, 0.0);
        for _ in 0..samples / 2 {
            let mut w = world.clone();
            inject_environment(&mut w, 1.0, reference, &mut rng);
            if let Some(FeatureValue::Position2D(p)) = w.get(0, 0) {
                abs_sum += p[0].abs() + p[1].abs();
                sum += p[0] + p[1];
            }
        }
        let mean_abs = abs_sum / samples as f64;
        assert!((mean_abs / reference - 1.0).abs() < 0.05, "mean |drift| {mean_abs}");
        assert!((sum / samples as f64).abs() < 0.05 * reference);
    }

    #[test]
    fn periodic_agents_repeat_every_period() {
        let noise = NoiseConfig { n2_intensity: 1.0, n2_pattern: N2Pattern::Periodic, ..NoiseConfig::none() };
        let s = scenario(TaskId::T2, noise);
        let agent = s.other_agents[0].object;
        let mut sim = Simulator::new(&s, noise, 9).unwrap();
        let mut worlds = vec![s.initial.clone()];
        for _ in 0..12 {
            let next = sim.advance(worlds.last().unwrap(), 0).unwrap();
            worlds.push(next);
        }
        let delta = |t: usize| match stage_delta(&worlds[t - 1], &worlds[t]).unwrap().get(agent, 0) {
            Some(DeltaValue::Position2D(d)) => *d,
            _ => unreachable!(),
        };
        for t in 1..=8 {
            let (a, b) = (delta(t), delta(t + 4));
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-9);
        }
        assert!(delta(1) != delta(2));
    }

    #[test]
    fn sensing_leaves_truth_alone_and_resamples() {
        let s = scenario(TaskId::T3, NoiseConfig::none());
        let mut rng = rng_for(4, &[]);
        let a = sense(&s.initial, 0.3, &s.config.arena, &mut rng);
        let b = sense(&s.initial, 0.3, &s.config.arena, &mut rng);
        assert_ne!(a, b);
        assert_ne!(a, s.initial);
        assert!(s.initial.same_layout(&a));
    }

    #[test]
    fn reflections_mirror_source_motion() {
        let s = scenario(TaskId::T10, NoiseConfig::none());
        let m = s.mirror.as_ref().unwrap();
        let body_reflection = m.reflections.iter().find(|r| s.truth.body_set.contains(&r.source));
        let Some(r) = body_reflection else { return };
        let q = (1..=s.config.signals)
            .find(|&q| s.truth.effects.for_signal(q).iter().any(|e| e.object == r.source))
            .unwrap();
        let mut rng = rng_for(1, &[]);
        let next = step(&s.initial, q, &s, &NoiseConfig::none(), &mut rng).unwrap();
        let d = stage_delta(&s.initial, &next).unwrap();
        let (Some(DeltaValue::Position2D(src)), Some(DeltaValue::Position2D(img))) = (d.get(r.source, 0), d.get(r.image, 0))
        else {
            unreachable!()
        };
        // reflect the source displacement as a vector
        let n = m.plane.normal;
        let dot = src[0] * n[0] + src[1] * n[1];
        assert_abs_diff_eq!(img[0], src[0] - 2.0 * dot * n[0], epsilon = 1e-9);
        assert_abs_diff_eq!(img[1], src[1] - 2.0 * dot * n[1], epsilon = 1e-9);
    }
}
