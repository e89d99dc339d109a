//! Body discovery by randomized experimentation.
//!
//! An agent emits randomized neural signals into a simulated world, records
//! the per-stage change of every object feature, and uses Fisher
//! randomization tests on difference-in-means estimates to decide which
//! objects it controls.

pub mod design;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod inference;
pub mod model;
pub mod scenario;
pub mod seed;
pub mod sim;
pub mod trace;

pub use error::{Error, Result};
pub use harness::{run_round, run_suite, run_sweep, Method, RoundResult, RunOptions, SuiteSpec, SweepParam, SweepSpec};
pub use model::{ActionSequence, FeatureKind, FeatureValue, StageDelta, WorldSnapshot};
pub use scenario::{generate_task, Scenario, TaskConfig, TaskId};
pub use sim::NoiseConfig;
