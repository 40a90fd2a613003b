pub mod dissipation;
pub mod lbfgs;
pub mod minimize;
pub mod penalty;
pub mod precond;
pub mod saturation;

pub use dissipation::smoothed_dissipation;
pub use lbfgs::Lbfgs;
pub use minimize::{minimize, minimize_from, weighted_norm, Diagnostics, Evaluation, IncrementalObjective, Objective, SolverOptions};
pub use penalty::incompressibility_penalty;
pub use saturation::{project_saturation, retract};
