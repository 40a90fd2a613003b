//! Scenario input, trace and field output.

pub mod scenario;
pub mod trace;
pub mod vtk;

pub use scenario::{load_scenario, parse_scenario, BoxSpec, InitialSpec, MeshSpec, OutputSpec, Scenario, Setup, TimeSpec};
pub use trace::{check_trace, read_trace, write_trace, TraceLimits, TraceRow, TRACE_COLUMNS};
pub use vtk::{write_fields, Configuration};
