//! Log-compressed mel spectrogram and MFCCs.

use ndarray::Array2;

use crate::dsp::features::{FeatureKind, FeatureSequence};
use crate::dsp::{stft, HOP, HOP_S, WIN};
use crate::error::{CoreError, Result};
use crate::ingest::{AudioChunk, TARGET_SAMPLE_RATE};

/// Number of mel bands.
pub const N_MELS: usize = 128;
/// Default MFCC coefficient count.
pub const DEFAULT_MFCC_COEFFS: usize = 20;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank, `n_mels x (n_fft/2 + 1)`, peak height 1.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let f_max = sample_rate / 2.0;
    let mel_lo = hz_to_mel(0.0);
    let mel_hi = hz_to_mel(f_max);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();

    let mut bank = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate / n_fft as f64;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            bank[[m, k]] = w;
        }
    }
    bank
}

/// Logarithmic magnitude compression used on mel energies. The gentle gain
/// keeps onset flux peaking where the energy slope is steepest instead of at
/// the first faint window contact, so pulse peaks line up with onsets.
pub fn log_compress(x: f64) -> f64 {
    (1.0 + 10.0 * x).ln()
}

fn require_target_rate(chunk: &AudioChunk) -> Result<()> {
    if chunk.sample_rate != TARGET_SAMPLE_RATE {
        return Err(CoreError::InvalidArgument(format!(
            "expected {TARGET_SAMPLE_RATE} Hz audio, got {} Hz",
            chunk.sample_rate
        )));
    }
    Ok(())
}

/// Log-compressed mel spectrogram: `ln(1 + 1000 * m)` on mel-filtered STFT
/// magnitudes, 128 bands, 1024-sample window, 320-sample hop.
pub fn log_mel(chunk: &AudioChunk) -> Result<FeatureSequence> {
    require_target_rate(chunk)?;
    let mag = stft::magnitude(&chunk.samples, WIN, HOP)?;
    let bank = mel_filterbank(N_MELS, WIN, chunk.sample_rate as f64);

    let mut out = Array2::zeros((mag.nrows(), N_MELS));
    for t in 0..mag.nrows() {
        let spec = mag.row(t);
        for m in 0..N_MELS {
            let energy: f64 = bank.row(m).dot(&spec);
            out[[t, m]] = log_compress(energy);
        }
    }
    FeatureSequence::new(out, HOP_S, FeatureKind::Mel)
}

/// Orthonormal DCT-II along each row.
fn dct_ii(frames: &Array2<f64>, n_out: usize) -> Array2<f64> {
    let d = frames.ncols();
    let norm0 = (1.0 / d as f64).sqrt();
    let norm = (2.0 / d as f64).sqrt();
    let mut basis = Array2::zeros((n_out, d));
    for k in 0..n_out {
        for n in 0..d {
            let scale = if k == 0 { norm0 } else { norm };
            basis[[k, n]] = scale
                * (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / d as f64).cos();
        }
    }
    frames.dot(&basis.t())
}

/// MFCCs from an existing log-mel sequence.
pub fn mfcc_from_mel(mel: &FeatureSequence, n_coeffs: usize) -> Result<FeatureSequence> {
    if n_coeffs == 0 || n_coeffs > mel.dim() {
        return Err(CoreError::InvalidArgument(format!(
            "mfcc coefficient count {n_coeffs} out of range 1..={}",
            mel.dim()
        )));
    }
    let out = dct_ii(&mel.frames, n_coeffs);
    FeatureSequence::new(out, mel.hop_s, FeatureKind::Mfcc)
}

/// MFCCs straight from audio: DCT-II of the log-mel spectrogram.
pub fn mfcc(chunk: &AudioChunk, n_coeffs: usize) -> Result<FeatureSequence> {
    mfcc_from_mel(&log_mel(chunk)?, n_coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn silent_chunk(seconds: f64) -> AudioChunk {
        AudioChunk {
            samples: vec![0.0; (seconds * 16000.0) as usize],
            sample_rate: 16000,
            source_id: "test".into(),
            offset_s: 0.0,
        }
    }

    #[test]
    fn log_compress_pinned_values() {
        assert_eq!(log_compress(0.0), 0.0);
        assert!((log_compress(1.0) - 11f64.ln()).abs() < 1e-12);
        assert!((log_compress(1.0) - 2.3979).abs() < 1e-4);
    }

    #[test]
    fn silence_maps_to_zero() {
        let mel = log_mel(&silent_chunk(2.0)).unwrap();
        assert_eq!(mel.dim(), 128);
        assert!(mel.frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_matches_formula() {
        let mel = log_mel(&silent_chunk(20.0)).unwrap();
        assert_eq!(mel.num_frames(), 997);
    }

    #[test]
    fn rejects_wrong_sample_rate() {
        let chunk = AudioChunk {
            samples: vec![0.0; 44100],
            sample_rate: 44100,
            source_id: "test".into(),
            offset_s: 0.0,
        };
        assert!(log_mel(&chunk).is_err());
    }

    #[test]
    fn filterbank_rows_cover_positive_frequencies() {
        let bank = mel_filterbank(128, 1024, 16000.0);
        for m in 0..128 {
            let sum: f64 = bank.row(m).sum();
            assert!(sum > 0.0, "band {m} is empty");
        }
    }

    #[test]
    fn dct_of_constant_rows_concentrates_in_c0() {
        let frames = Array2::from_elem((5, 128), 3.25);
        let feat = FeatureSequence::new(frames, 0.02, FeatureKind::Mel).unwrap();
        let coeffs = mfcc_from_mel(&feat, 20).unwrap();
        for t in 0..coeffs.num_frames() {
            let row = coeffs.row(t);
            // Orthonormal DCT-II of a constant: c0 = value * sqrt(d).
            assert!((row[0] - 3.25 * (128f64).sqrt()).abs() < 1e-9);
            for k in 1..coeffs.dim() {
                assert!(row[k].abs() < 1e-9, "coefficient {k} = {}", row[k]);
            }
        }
    }

    #[test]
    fn mfcc_respects_coefficient_bounds() {
        let feat = FeatureSequence::new(Array2::zeros((2, 16)), 0.02, FeatureKind::Mel).unwrap();
        assert!(mfcc_from_mel(&feat, 0).is_err());
        assert!(mfcc_from_mel(&feat, 17).is_err());
        assert_eq!(mfcc_from_mel(&feat, 16).unwrap().dim(), 16);
    }
}
