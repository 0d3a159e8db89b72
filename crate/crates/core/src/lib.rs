//! Distilling a large speech-embedding teacher into small students and
//! measuring what survives with linear probes.
//!
//! The pipeline runs waveform → [`frontend`] log-mel patches → [`teacher`]
//! targets → [`distill`]ed [`students`] → clip embeddings ([`embed`]) →
//! [`probes`] selected on dev → [`metrics`] and reports ([`harness`]).

pub mod distill;
pub mod embed;
pub mod embedding;
pub mod error;
pub mod frontend;
pub mod harness;
pub mod metrics;
pub mod probes;
pub mod students;
pub mod teacher;

pub use embedding::{EmbeddingVector, PatchEmbedder};
pub use error::{Error, Result};
