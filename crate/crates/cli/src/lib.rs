//! Experiment driver for coupled autoregressive generation: TOML experiment
//! configs, property suites and the `coupled` subcommands.

pub mod commands;
pub mod config;
pub mod output;
pub mod suites;
