//! Speaker re-identification for first-order ambisonic (FOA) tracker output.
//!
//! A spatial tracker emits direction-of-arrival tracks on a fixed number of
//! output branches, but the branch that carries a given speaker can change
//! over time. This crate simulates such scenes and trackers, extracts
//! speaker embeddings from beamformed audio, reassigns track portions to
//! enrolled identities, and scores the result.

// Range checks are written as negated comparisons so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod foa;
pub mod metrics;
pub mod parallel;
pub mod reassign;
pub mod scene;
pub mod track;
pub mod tracker;
pub mod voice;
pub mod wav;

pub use error::{Error, Result};
