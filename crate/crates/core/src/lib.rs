//! Surname-affinity knowledge graphs and Tucker-decomposition link
//! prediction: network construction from individual records, TuckER and
//! baseline scorers trained under 1:N scoring, rank-based evaluation and
//! shared-nearest-neighbor analysis of correct predictions.

pub mod affinity;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod kg;
pub mod models;
pub mod rng;
pub mod snn;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
