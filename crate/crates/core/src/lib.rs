//! Rhythm analysis toolkit: audio ingest, pulse tracking, tempo/phase hypothesis
//! mining, contrastive hypothesis scoring, and self-supervised pre-training at
//! desk scale.
//!
//! The crate is organized around a fixed 16 kHz / 20 ms-hop analysis pipeline:
//!
//! * [`ingest`] — WAV decoding, resampling, chunking, beat annotations
//! * [`dsp`] — STFT, log-mel, onset strength, predominant local pulse, chroma
//! * [`hypothesis`] — tempo/phase hypothesis pools over pulse peaks
//! * [`scoring`] — contrastive hypothesis scores and winner-take-all selection
//! * [`ssl`] — small frame-local encoder with multi-head contrastive training
//! * [`supervised`] — beat activation losses and peak decoding
//! * [`metrics`] — beat tracking evaluation (F-measure, continuity scores)
//! * [`synthbench`] — synthetic corpora and reproducible studies

pub mod dsp;
pub mod error;
pub mod hypothesis;
pub mod ingest;
pub mod metrics;
pub mod scoring;
pub mod ssl;
pub mod supervised;
pub mod synthbench;

pub use dsp::features::{FeatureKind, FeatureSequence};
pub use dsp::plp::{PlpConfig, PlpResult};
pub use error::{CoreError, Result};
pub use hypothesis::{Hypothesis, HypothesisPool, TripletSet};
pub use ingest::{AudioChunk, BeatAnnotation, BeatEvent, ChunkRecord};
pub use metrics::MetricsReport;
pub use scoring::{ScoreTable, SelectionResult};
pub use ssl::params::EncoderParams;
pub use ssl::train::{TrainChunk, TrainConfig, TrainLog};
