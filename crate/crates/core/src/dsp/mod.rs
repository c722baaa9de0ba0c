//! Signal processing at a fixed 16 kHz / 20 ms-hop analysis grid.
//!
//! All per-frame features produced from the same chunk share the STFT frame
//! count `T = 1 + floor((N - win) / hop)` (no edge padding), so frame indices
//! can be exchanged between feature kinds, onset curves, and pulse peaks.

pub mod chroma;
pub mod features;
pub mod mel;
pub mod plp;
pub mod stft;
pub mod superflux;

use crate::error::Result;
use crate::ingest::AudioChunk;

pub use features::{lag_stack, read_feature_dump, write_feature_dump, FeatureKind, FeatureSequence};
pub use plp::{plp, PlpConfig, PlpResult};

/// STFT window length in samples.
pub const WIN: usize = 1024;
/// Hop size in samples (20 ms at 16 kHz).
pub const HOP: usize = 320;
/// Hop size in seconds.
pub const HOP_S: f64 = 0.02;

/// Number of frames produced for `n` samples (window-center frames only).
pub fn num_frames(n: usize) -> usize {
    if n < WIN {
        0
    } else {
        1 + (n - WIN) / HOP
    }
}

/// Time of a frame center in seconds.
pub fn frame_time(frame: usize, sample_rate: u32) -> f64 {
    (frame * HOP + WIN / 2) as f64 / sample_rate as f64
}

/// Frame whose center is nearest to `time_s` (clamped to a valid index).
pub fn time_to_frame(time_s: f64, sample_rate: u32, t_len: usize) -> usize {
    let pos = (time_s * sample_rate as f64 - (WIN / 2) as f64) / HOP as f64;
    let frame = pos.round().max(0.0) as usize;
    frame.min(t_len.saturating_sub(1))
}

/// Onset strength curve for a chunk: log-mel, superflux difference, then
/// subtraction of a 1-second moving average.
pub fn onset_strength(chunk: &AudioChunk) -> Result<FeatureSequence> {
    let mel = mel::log_mel(chunk)?;
    let osf = superflux::superflux_osf(&mel, superflux::DEFAULT_LAG, superflux::DEFAULT_MAX_BANDS);
    Ok(superflux::highpass(&osf, superflux::DEFAULT_HIGHPASS_S))
}

/// Full pulse extraction for a chunk with the given configuration.
pub fn plp_from_audio(chunk: &AudioChunk, cfg: &PlpConfig) -> Result<PlpResult> {
    let osf = onset_strength(chunk)?;
    Ok(plp::plp(&osf, cfg))
}

/// Extract one of the supported per-frame feature kinds from audio.
pub fn extract(chunk: &AudioChunk, kind: FeatureKind) -> Result<FeatureSequence> {
    match kind {
        FeatureKind::Mel => mel::log_mel(chunk),
        FeatureKind::ChromaStft => chroma::chroma_stft(chunk),
        FeatureKind::ChromaVqt => chroma::chroma_vqt(chunk),
        FeatureKind::Mfcc => mel::mfcc(chunk, mel::DEFAULT_MFCC_COEFFS),
        other => Err(crate::error::CoreError::InvalidArgument(format!(
            "feature kind {other:?} is derived, not extracted from audio"
        ))),
    }
}
