//! Deterministic multi-agent simulator for low-altitude drone traffic.
//!
//! Missions launch from declared areas on a fixed cadence, fly straight
//! (free flight) or along horizontal/vertical sky lanes, optionally under a
//! central planner that books every (cell, step) in advance, and hold a
//! cellular command-and-control link whose quality follows a log-distance
//! propagation model. Logs feed conflict, throughput, flight-time,
//! link-quality and density metrics.

pub mod analysis;
pub mod cli;
pub mod comms;
pub mod engine;
pub mod export;
pub mod grid;
pub mod log;
pub mod routing;
pub mod scenario;

pub use analysis::{summarize_metrics, MetricsReport};
pub use engine::{run, run_replicate, SimError, World};
pub use grid::{Cell, Grid, Point};
pub use log::SimulationLog;
pub use scenario::{parse_scenario, validate, ScenarioConfig};
