//! Scenario runner: config parsing, analyses and artifact writers.

pub mod config;
pub mod run;
