//! Sound–vision alignment analysis for urban soundscapes.
//!
//! The crate reads a site manifest and externally produced features
//! (embeddings, segmentation rasters, audio tag probabilities), reduces them
//! to per-site vectors, builds pairwise similarity series for every modality,
//! and correlates visual against sound similarity with both a naive t-test
//! and a Mantel permutation test, overall and per city.
//!
//! ```text
//! manifest ─► feature_store ─► seg_features ─► bga ─┐
//!                    │                              ├─► similarity ─► stats ─► pipeline report
//!                    └──────────────────────────────┘
//! ```
//!
//! `audio_dsp` provides the log-Mel front end that audio encoders consume.

pub mod audio_dsp;
pub mod bga;
pub mod error;
pub mod feature_store;
pub mod manifest;
pub mod numfmt;
pub mod pipeline;
pub mod seg_features;
pub mod similarity;
pub mod stats;

pub use error::{Error, Result};
