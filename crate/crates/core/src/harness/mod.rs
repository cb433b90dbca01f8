//! Drivers behind the `diffnet` command: configured simulation sweeps, the
//! two-sample mode for observed data, and their CSV/JSON outputs.

pub mod config;
pub mod csvio;
pub mod real;
pub mod sweep;

pub use config::{linspace, logspace, Grids, RunConfig, SweepScenario, BUILTIN_PRESET};
pub use csvio::{emit_plot_data, parse_data_csv, parse_plot_csv, read_data_csv, PlotRow};
pub use real::{multiplicity, run_real, write_real, MultiplicityReport, RealConfig, RealReport};
pub use sweep::{cell_seed, replicate_data, run_sweep, scenario_models, write_sweep, SweepResult};
