//! Experiment harness: synthetic signal generators, transmission schemes,
//! rate-distortion sweeps, and the `semcast` command line.

pub mod cli;
pub mod config;
pub mod scheme;
pub mod sweep;
pub mod synth;

pub use cli::run;
