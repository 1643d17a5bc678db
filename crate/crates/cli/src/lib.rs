//! Batch sweeps over the phaseconv numerics.
//!
//! [`config::parse_config`] validates a JSON experiment description,
//! [`sweep::run_sweep`] evaluates its rows in parallel and [`emit`] writes
//! them as CSV or JSON.

pub mod config;
pub mod emit;
pub mod sweep;

pub use config::{parse_config, Experiment, SweepConfig, ValidationErrors};
pub use emit::Format;
pub use sweep::{run_sweep, SweepResult};
