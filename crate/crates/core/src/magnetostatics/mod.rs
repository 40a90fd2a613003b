//! Stray-field potential on an embedding box and the magnetostatic energy.

pub mod poisson;
pub mod stray;

pub use poisson::{magnetostatic_energy, solve_potential, PoissonBox, StrayFieldSolution, DEFAULT_TOLERANCE};
pub use stray::{write_potential_vtk, StrayEvaluation, StrayFieldModel};
