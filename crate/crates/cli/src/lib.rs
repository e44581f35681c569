//! Command-line front end for the joint channel-estimation / hybrid-precoding
//! pipeline: experiment configs, the metrics table, deterministic SVG plots,
//! and the grid runner behind the `hybeam` binary.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod runner;
