//! Deterministic virtual-clock testbed for the linker: a synthetic chunking
//! policy, a simulated robot, latency models, a scenario runner, run traces
//! and smoothness metrics.

pub mod clock;
pub mod latency;
pub mod metrics;
pub mod policy;
pub mod robot;
pub mod runner;
pub mod scenario;
pub mod trace;

pub use metrics::{control_gaps, discontinuity_report, smoothness_report, SmoothnessReport};
pub use runner::{run_scenario, RunOutput};
pub use scenario::{Scenario, ScenarioError};
pub use trace::RunTrace;
