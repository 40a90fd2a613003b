pub mod error;
pub mod evolution;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod magnetostatics;
pub mod material;
pub mod optim;
pub mod selftest;

pub use error::{Error, Result};
