//! Core library for a deterministic simulator of buffered asynchronous
//! split federated learning with generative activation replay.
//!
//! Everything is plain `f64` with fixed iteration orders, so a given
//! (config, seed) pair reproduces runs bit-for-bit across machines.

pub mod actdist;
pub mod buffers;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod latency;
pub mod metrics;
pub mod nn;
pub mod sim;
pub mod split;
pub mod tensor;

pub use config::{ExperimentConfig, Mode};
pub use error::{Error, Result};
pub use experiment::{resume_experiment, run_experiment, RunOutput};
pub use sim::{SimEnv, Simulation};
pub use split::SplitModel;
pub use tensor::Tensor;
