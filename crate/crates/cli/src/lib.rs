//! Command-line harness around the [`gelab`] laboratory: TOML experiment
//! configs, SGD/ODE trajectory persistence, tracking comparisons with
//! Gaussian-baseline thresholds, diagnostic scaling sweeps, and figure-data
//! emission.
//!
//! The binary is a thin argument parser over these modules; everything here
//! is callable as a library (the integration tests drive experiments through
//! this crate directly).

pub mod config;
pub mod experiment;
pub mod plots;
pub mod report;
