//! Run configurations, sweeps, result tables, trace files and the offline
//! invariant checker.

pub mod config;
pub mod run;
pub mod verify;

pub use config::{Cell, ConfigError, Protocol, RunConfig};
pub use run::{run_cell, run_sweep, to_csv, CellRun, ResultRow, RunError, TraceFile};
pub use verify::{verify_trace, Check, Report};
