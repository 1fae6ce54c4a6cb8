//! Matching movie segments to synopsis paragraphs.
//!
//! A segment (a sequence of shot features plus person detections) is scored
//! against a paragraph (a sequence of sentence features plus parsed
//! character/verb mentions) by two complementary modules:
//!
//! * [`event_flow`] aligns shots to sentences under an order-preserving
//!   constraint, solved exactly by dynamic programming.
//! * [`qap`] matches the typed character/action graphs of both sides, a
//!   quadratic assignment problem, exactly for small graphs or by
//!   Kuhn–Munkres after seed-and-propagate pruning.
//!
//! [`training`] learns the embedding maps with an EM-style loop, and
//! [`retrieval`] ranks candidates and computes Recall@K / MedR.
//! [`synth`] generates planted datasets for testing.

pub mod config;
pub mod data;
pub mod error;
pub mod event_flow;
pub mod feature;
pub mod graph;
pub mod qap;
pub mod retrieval;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use feature::{FeatureMatrix, FeatureVector, Matrix, RngSeed};
