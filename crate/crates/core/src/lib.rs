//! Spiking reservoir pipeline for multivariate temporal data.
//!
//! Signals are encoded into bipolar spike trains, variables are placed onto
//! the input neurons of a 3D leaky integrate-and-fire lattice by graph
//! matching, the lattice learns by STDP, and a rank-order readout classifies
//! full or truncated samples. The trained lattice can be decomposed into
//! per-input neuronal clusters, and a genetic algorithm tunes the main
//! hyperparameters by cross-validation.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mapping;
pub mod optimizer;
pub mod pipeline;
pub mod readout;
pub mod reservoir;
pub mod similarity;

pub use error::{Error, Result};
