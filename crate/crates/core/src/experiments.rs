//! Study driver: configuration, the fine-to-coarse pipeline, and exports.

pub mod config;
pub mod export;
pub mod pipeline;
pub mod study;

pub use config::{parse_config, BasisKind, ExperimentConfig};
pub use pipeline::{CoarseSystem, Level, Scene};
pub use study::{run_steady_study, run_transient_study, RunReport};
