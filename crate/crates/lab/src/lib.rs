//! Experiment harness around `trajlab-core`: CSV ingestion, run configuration,
//! TGL1 checkpoints, the pretrain / fine-tune / baseline protocol, evaluation
//! reports, significance tables and SVG plots.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod plot;
pub mod report;

pub use error::{LabError, Result};
