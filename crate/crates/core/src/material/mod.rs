//! Stored energy, loads and the time-dependent energy 𝓔(t, q).

pub mod density;
pub mod energy;
pub mod loads;
pub mod params;

pub use density::{elastic_density, DensityValue};
pub use energy::{
    bulk_terms, elastic_energy, energy_time_derivative, exchange_energy, load_potential, time_derivative_integral,
    EnergyGradient, EnergyLedger, EnergyModel, LoadPotential,
};
pub use loads::{LoadHistory, Loads};
pub use params::MaterialParams;
