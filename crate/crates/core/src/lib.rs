//! Turns bank-statement transactions into labeled spending time series and
//! runs the analyses on them: privacy-preserving normalization, grouping by
//! mood-episode severity, burstiness, Welch ANOVA with Games-Howell post-hoc
//! comparisons, and isolation-forest anomaly detection.

pub mod anomaly;
pub mod config;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod ledger;
pub mod privacy;
pub mod report;
pub mod series;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

/// Seed used by every randomized command when none is given.
pub const DEFAULT_SEED: u64 = 20_170_101;
