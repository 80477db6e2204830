pub mod config;
pub mod dosm;
pub mod error;
pub mod experiments;
pub mod funcalc;
pub mod lattice;
pub mod linalg;
pub mod measures;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod test_functions;

pub use error::{Error, Result};
