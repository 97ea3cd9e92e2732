//! Experiment orchestration for edgeraft: run configuration, multi-trial
//! training and baselines, safety campaigns, and plot-ready CSV reports.

pub mod commands;
pub mod config;
pub mod metrics;
pub mod report;

pub use config::{Overrides, Precision, RunConfig};
