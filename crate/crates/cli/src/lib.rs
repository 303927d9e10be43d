//! Config-driven experiments on the LMMSE SINR deterministic equivalent.

pub mod commands;
pub mod config;

pub use config::ExperimentConfig;
