//! Few-shot node classification benchmark: graph loading, class splits,
//! episodic sampling, encoders, training strategies and the evaluation
//! protocol.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod encoders;
pub mod episodes;
pub mod error;
pub mod gradsuite;
pub mod graph;
pub mod ingest;
pub mod methods;
pub mod nn;
pub mod protocol;
pub mod report;
pub mod rng;
pub mod splits;
pub mod stats;

pub use error::{Error, Result};
