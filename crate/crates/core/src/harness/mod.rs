//! Experiment runner: configuration, the training loop, metrics, probing and
//! plotting.

pub mod config;
pub mod plot;
pub mod probe;
pub mod runner;

pub use config::{AuxSettings, DiceSettings, Method, RunConfig};
pub use plot::{band, plot_curves, read_curve, BandPoint};
pub use probe::{default_grid_probe, format_probe, grid_probe_observation, probe_state, ProbeRow};
pub use runner::{evaluate, run_experiment, AuxEvent, MetricsRow, RunOutput, Snapshot, CSV_HEADER};
