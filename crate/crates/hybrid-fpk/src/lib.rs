//! Finite-element Markov-chain approximation of switched hybrid
//! Fokker-Planck equations, applied to intermittent postural control, with a
//! Monte Carlo cross-check of the underlying stochastic (delay) equations.

pub mod assembly;
pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod mesh;
pub mod model;
pub mod montecarlo;
pub mod sparse;
pub mod spectral;
pub mod sweep;

pub use error::{Error, Result};
