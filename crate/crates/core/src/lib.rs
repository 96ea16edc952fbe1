//! Quantum thermal averages through path-integral representations.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod oracle;
pub mod potentials;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
