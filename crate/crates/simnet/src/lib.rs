//! Deterministic desk-scale simulation of the braid protocols. One
//! seeded event loop per scenario; every artifact a run emits is a
//! pure function of its config, so identical seeds give identical
//! bytes.

#![forbid(unsafe_code)]

pub mod config;
pub mod double_spend;
pub mod liveness;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod throughput;

pub use config::{AttackKind, ConfigError, ScenarioKind, SimConfig};
pub use metrics::{MetricsReport, RunArtifacts};

/// Run one scenario to completion and return its artifacts.
pub fn run_scenario(cfg: &SimConfig) -> Result<RunArtifacts, ConfigError> {
    cfg.validate()?;
    Ok(match cfg.scenario {
        ScenarioKind::Throughput => throughput::run(cfg),
        ScenarioKind::DoubleSpend => double_spend::run(cfg),
        ScenarioKind::Liveness => liveness::run(cfg),
        _ => unimplemented!(),
    })
}
