//! Command-line front end and simulation harness for `transport-bounds`.
//!
//! - [`csvio`]: trial and target CSV files.
//! - [`config`]: flat `key = value` settings for simulations and studies.
//! - [`json`]: ordered JSON output.
//! - [`experiments`]: the Monte Carlo replication engine.
//! - [`app`]: the `tbounds` subcommands.

pub mod app;
pub mod config;
pub mod csvio;
pub mod experiments;
pub mod json;
