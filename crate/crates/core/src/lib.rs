//! Evaluation and aggregation harness for four-tier research-quality judgments.

pub mod aggregate;
pub mod calibrate;
pub mod classify;
pub mod cli;
pub mod collect;
pub mod error;
pub mod ingest;
pub mod journals;
pub mod metrics;
pub mod pairwise;
pub mod prompts;
pub mod rlsim;
pub mod rng;
pub mod stats;
pub mod tiers;

pub use error::Error;
pub use tiers::{headroom, normalize_label, LabelSource, Tier};
