//! Pitch-class profiles from the STFT and from a variable-Q filter bank.

use ndarray::Array2;

use crate::dsp::features::{FeatureKind, FeatureSequence};
use crate::dsp::stft::hann;
use crate::dsp::{stft, HOP, HOP_S, WIN};
use crate::error::{CoreError, Result};
use crate::ingest::{AudioChunk, TARGET_SAMPLE_RATE};

/// MIDI range folded into the chroma: C1 (32.7 Hz) through B7.
const MIDI_LO: i32 = 24;
const MIDI_HI: i32 = 107;
/// Bins per octave of the variable-Q bank.
const BINS_PER_OCTAVE: usize = 12;
/// Bandwidth offset of the variable-Q bank, Hz.
const VQT_GAMMA_HZ: f64 = 24.0;
/// Hann-window equivalent-noise-bandwidth factor used to size kernels.
const ENBW: f64 = 1.5;

fn require_target_rate(chunk: &AudioChunk) -> Result<()> {
    if chunk.sample_rate != TARGET_SAMPLE_RATE {
        return Err(CoreError::InvalidArgument(format!(
            "expected {TARGET_SAMPLE_RATE} Hz audio, got {} Hz",
            chunk.sample_rate
        )));
    }
    Ok(())
}

fn l2_normalize_rows(mut frames: Array2<f64>) -> Array2<f64> {
    for mut row in frames.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    frames
}

/// Chroma from STFT magnitudes: each bin's magnitude is assigned to the pitch
/// class of its nearest equal-tempered note within C1..B7, then every frame is
/// L2-normalized (silent frames stay zero).
pub fn chroma_stft(chunk: &AudioChunk) -> Result<FeatureSequence> {
    require_target_rate(chunk)?;
    let mag = stft::magnitude(&chunk.samples, WIN, HOP)?;
    let sr = chunk.sample_rate as f64;

    // Pitch class of each FFT bin, or None outside the folded range.
    let classes: Vec<Option<usize>> = (0..mag.ncols())
        .map(|k| {
            if k == 0 {
                return None;
            }
            let f = k as f64 * sr / WIN as f64;
            let midi = (69.0 + 12.0 * (f / 440.0).log2()).round() as i32;
            if (MIDI_LO..=MIDI_HI).contains(&midi) {
                Some((midi % 12) as usize)
            } else {
                None
            }
        })
        .collect();

    let mut out = Array2::zeros((mag.nrows(), 12));
    for t in 0..mag.nrows() {
        let spec = mag.row(t);
        for (k, class) in classes.iter().enumerate() {
            if let Some(c) = class {
                out[[t, *c]] += spec[k];
            }
        }
    }
    FeatureSequence::new(l2_normalize_rows(out), HOP_S, FeatureKind::ChromaStft)
}

/// One complex analysis kernel of the variable-Q bank.
struct VqtKernel {
    class: usize,
    /// Hann-weighted cosine/sine taps, centered.
    re: Vec<f64>,
    im: Vec<f64>,
}

fn build_vqt_bank(sr: f64) -> Vec<VqtKernel> {
    let alpha = 2f64.powf(1.0 / BINS_PER_OCTAVE as f64) - 1.0;
    let n_bins = (MIDI_HI - MIDI_LO + 1) as usize;
    let mut bank = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let midi = MIDI_LO + b as i32;
        let f = 440.0 * 2f64.powf((midi - 69) as f64 / 12.0);
        // Variable-Q bandwidth: proportional term plus a constant offset that
        // keeps low-frequency kernels short.
        let bandwidth = alpha * f + VQT_GAMMA_HZ;
        let mut len = ((ENBW * sr / bandwidth).round() as usize).max(3);
        if len % 2 == 0 {
            len += 1;
        }
        let window = hann(len);
        let wsum: f64 = window.iter().sum();
        let half = (len / 2) as f64;
        let mut re = Vec::with_capacity(len);
        let mut im = Vec::with_capacity(len);
        for (i, w) in window.iter().enumerate() {
            let t = (i as f64 - half) / sr;
            let angle = -2.0 * std::f64::consts::PI * f * t;
            re.push(w * angle.cos() / wsum);
            im.push(w * angle.sin() / wsum);
        }
        bank.push(VqtKernel { class: (midi % 12) as usize, re, im });
    }
    bank
}

/// Chroma from a variable-Q filter bank (12 bins per octave over C1..B7 with a
/// 24 Hz bandwidth offset), folded to 12 classes and L2-normalized per frame.
///
/// Kernels are evaluated at the STFT frame centers so the result shares the
/// frame grid of every other feature kind.
pub fn chroma_vqt(chunk: &AudioChunk) -> Result<FeatureSequence> {
    require_target_rate(chunk)?;
    let n = chunk.samples.len();
    if n < WIN {
        return Err(CoreError::Shape(format!(
            "signal of {n} samples is shorter than the {WIN} sample window"
        )));
    }
    let t_len = crate::dsp::num_frames(n);
    let bank = build_vqt_bank(chunk.sample_rate as f64);

    let mut out = Array2::zeros((t_len, 12));
    for t in 0..t_len {
        let center = (t * HOP + WIN / 2) as i64;
        for kernel in &bank {
            let half = (kernel.re.len() / 2) as i64;
            let mut acc_re = 0.0f64;
            let mut acc_im = 0.0f64;
            for (i, (&kr, &ki)) in kernel.re.iter().zip(&kernel.im).enumerate() {
                let idx = center - half + i as i64;
                if idx < 0 || idx >= n as i64 {
                    continue;
                }
                let s = chunk.samples[idx as usize] as f64;
                acc_re += s * kr;
                acc_im += s * ki;
            }
            out[[t, kernel.class]] += (acc_re * acc_re + acc_im * acc_im).sqrt();
        }
    }
    FeatureSequence::new(l2_normalize_rows(out), HOP_S, FeatureKind::ChromaVqt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, seconds: f64) -> AudioChunk {
        let sr = 16000u32;
        let samples: Vec<f32> = (0..(seconds * sr as f64) as usize)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32 * 0.5)
            .collect();
        AudioChunk { samples, sample_rate: sr, source_id: "tone".into(), offset_s: 0.0 }
    }

    fn silence(seconds: f64) -> AudioChunk {
        AudioChunk {
            samples: vec![0.0; (seconds * 16000.0) as usize],
            sample_rate: 16000,
            source_id: "silence".into(),
            offset_s: 0.0,
        }
    }

    const CLASS_A: usize = 9;

    fn dominant_class(feat: &FeatureSequence, t: usize) -> usize {
        feat.row(t)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap()
    }

    #[test]
    fn stft_chroma_of_a440_peaks_at_class_a() {
        let feat = chroma_stft(&tone(440.0, 1.0)).unwrap();
        for t in 0..feat.num_frames() {
            assert_eq!(dominant_class(&feat, t), CLASS_A, "frame {t}");
        }
    }

    #[test]
    fn vqt_chroma_of_a440_peaks_at_class_a() {
        let feat = chroma_vqt(&tone(440.0, 1.0)).unwrap();
        for t in 0..feat.num_frames() {
            assert_eq!(dominant_class(&feat, t), CLASS_A, "frame {t}");
        }
    }

    #[test]
    fn vqt_chroma_of_low_a_peaks_at_class_a() {
        // A2 = 110 Hz exercises the long low-frequency kernels.
        let feat = chroma_vqt(&tone(110.0, 1.0)).unwrap();
        let mid = feat.num_frames() / 2;
        assert_eq!(dominant_class(&feat, mid), CLASS_A);
    }

    #[test]
    fn rows_are_unit_or_zero_norm() {
        for feat in [chroma_stft(&tone(440.0, 0.5)).unwrap(), chroma_vqt(&tone(440.0, 0.5)).unwrap()]
        {
            for t in 0..feat.num_frames() {
                let row = feat.row(t);
                let norm = row.dot(&row).sqrt();
                assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-6, "norm {norm}");
            }
        }
    }

    #[test]
    fn silence_gives_zero_frames() {
        for feat in [chroma_stft(&silence(0.5)).unwrap(), chroma_vqt(&silence(0.5)).unwrap()] {
            assert!(feat.frames.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shares_frame_grid_with_stft_features() {
        let chunk = tone(220.0, 2.0);
        let a = chroma_stft(&chunk).unwrap();
        let b = chroma_vqt(&chunk).unwrap();
        assert_eq!(a.num_frames(), b.num_frames());
        assert_eq!(a.num_frames(), crate::dsp::num_frames(chunk.samples.len()));
    }
}
