//! Self-supervised representation learning on rhythm hypotheses.
//!
//! A small MLP encoder maps per-frame features to a shared representation;
//! one projection head per hypothesis specialises it. Training scores every
//! hypothesis on each chunk, lets the best few win, and descends the
//! contrastive loss of the winning heads only. Gradients are hand-written.

pub mod checkpoint;
pub mod grad;
pub mod loss;
pub mod network;
pub mod params;
pub mod probe;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use grad::{grad, total_loss, LossTerm};
pub use loss::ntxent_loss;
pub use network::{encode, head_project, rms_normalize, RepresentationSequence, RMS_EPS};
pub use params::{Dims, EncoderParams, HeadParams};
pub use probe::{fit as fit_probe, frame_f1, Probe, ProbeConfig};
pub use train::{
    score_and_select, self_train, train, ChunkStep, SelfTrainChunk, StepRecord, TrainChunk,
    TrainConfig, TrainLog, TrainOutcome,
};
