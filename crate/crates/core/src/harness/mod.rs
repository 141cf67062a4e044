//! Scenario files in, event logs and metrics out. `scenario` defines the run
//! description, `sim` executes it tick by tick, `events` is the log format,
//! `metrics` reduces a log to headline numbers, and `sweep` reruns one
//! scenario across a parameter axis.

pub mod events;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod sweep;

pub use events::{read_log, write_log, Event};
pub use metrics::{compute_metrics, MetricsReport};
pub use scenario::{load_scenario, Route, Scenario};
pub use sim::{run_scenario, SimOutput};
pub use sweep::{apply_patch, run_sweep, sweep_csv, SweepPoint};
