//! Simulation of a quantum cantilever driven by cyclic adiabatic inversion of
//! one spin of an entangled pair, with the measurement observables that show
//! the resulting two-branch ("Schrodinger cat") cantilever state.

pub mod config;
pub mod error;
pub mod evolve;
pub mod field;
pub mod grid;
pub mod io;
pub mod observables;
pub mod oracle;
pub mod params;
pub mod propagator;
pub mod record;
pub mod schedule;

pub use config::{parse_config, parse_config_str, SimConfig};
pub use error::{ConfigError, EvolveError, GridError, IoError, ObservableError, OracleError, ScheduleError};
pub use evolve::{evolve, evolve_observed, Observer};
pub use field::{Component, Representation, Spin, SpinPair, SpinorField};
pub use grid::{make_grid, SpatialGrid};
pub use io::{analyze, run, RunError, RunOptions, RunOutcome};
pub use params::PhysicalParams;
pub use propagator::{spin_block_step, StepPlan};
pub use record::{RunRecord, Sample, Snapshot};
pub use schedule::{Drive, DriveSchedule};
