//! Classifies 360-degree versus regular video sessions from encrypted
//! mobile traffic captures.
//!
//! The pipeline stages are:
//! - [`ingest`]: pcap/CSV parsing, device filtering, flow assembly and
//!   platform flow selection;
//! - [`features`]: sliding-window packet features and per-flow features,
//!   summarized into per-trace vectors;
//! - [`gbt`]: a from-scratch gradient-boosted tree binary classifier;
//! - [`realtime`]: per-bin streaming classification with majority voting;
//! - [`heuristic`]: a per-feature threshold voting baseline;
//! - [`synth`]: a deterministic labeled trace generator;
//! - [`eval`]: repeated-split experiment drivers and metrics.

pub mod error;
pub mod eval;
pub mod features;
pub mod gbt;
pub mod heuristic;
pub mod ingest;
pub mod realtime;
pub mod record;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
