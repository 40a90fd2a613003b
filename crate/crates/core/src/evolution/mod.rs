//! Dissipation, incremental time stepping and the energetic-solution audits.

pub mod audit;
pub mod dissipation;
pub mod run;
pub mod step;
pub mod trajectory;

pub use audit::{sample_competitors, stability_audit, AuditConfig, Competitor, CompetitorKind, StabilityResult};
pub use dissipation::{dissipation, l1_distance};
pub use run::{run_evolution, uniform_partition, Evolution, EvolutionConfig, RunFailure};
pub use step::{incremental_step, restart_step, Candidate, Evaluated, Problem, StepOutcome};
pub use trajectory::{AuditReport, Limits, StepRecord, Trajectory};
