//! Short-time Fourier transform with a Hann window and no edge padding.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CoreError, Result};

/// Symmetric Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| {
            let x = i as f64 / (n - 1) as f64;
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * x).cos()
        })
        .collect()
}

/// Complex STFT: `T x (win/2 + 1)` with frame `t` covering samples
/// `[t*hop, t*hop + win)`. Frames that would reach past the signal end are
/// dropped rather than zero-padded.
pub fn stft(samples: &[f32], win: usize, hop: usize) -> Result<Array2<Complex<f64>>> {
    if win == 0 || hop == 0 {
        return Err(CoreError::InvalidArgument("win and hop must be positive".into()));
    }
    if samples.len() < win {
        return Err(CoreError::Shape(format!(
            "signal of {} samples is shorter than the {} sample window",
            samples.len(),
            win
        )));
    }
    let t_len = 1 + (samples.len() - win) / hop;
    let n_bins = win / 2 + 1;
    let window = hann(win);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(win);
    let mut out = Array2::zeros((t_len, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); win];

    for t in 0..t_len {
        let start = t * hop;
        for i in 0..win {
            buf[i] = Complex::new(samples[start + i] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, slot) in out.row_mut(t).iter_mut().enumerate() {
            *slot = buf[k];
        }
    }
    Ok(out)
}

/// Magnitude spectrogram (`T x (win/2 + 1)`).
pub fn magnitude(samples: &[f32], win: usize, hop: usize) -> Result<Array2<f64>> {
    Ok(stft(samples, win, hop)?.mapv(|c| c.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let samples = vec![0.0f32; 320_000];
        let spec = stft(&samples, 1024, 320).unwrap();
        assert_eq!(spec.nrows(), 997);
        assert_eq!(spec.ncols(), 513);
    }

    #[test]
    fn rejects_signal_shorter_than_window() {
        let samples = vec![0.0f32; 512];
        assert!(stft(&samples, 1024, 320).is_err());
    }

    #[test]
    fn sine_peaks_in_expected_bin() {
        // 1 kHz at 16 kHz with a 1024 window: bin 1000 / (16000/1024) = 64.
        let sr = 16000.0;
        let samples: Vec<f32> = (0..16000)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr).sin() as f32)
            .collect();
        let mag = magnitude(&samples, 1024, 320).unwrap();
        for t in 0..mag.nrows() {
            let row = mag.row(t);
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap();
            assert_eq!(peak, 64, "frame {t} peaked at bin {peak}");
        }
    }

    #[test]
    fn parseval_energy_matches_windowed_frames() {
        // For each frame, sum |X_k|^2 over the full spectrum equals
        // win * sum_n (x_n w_n)^2. Reconstruct the full sum from the
        // one-sided output.
        let win = 1024;
        let samples: Vec<f32> = (0..4096)
            .map(|i| ((i * 37 % 101) as f32 / 101.0) - 0.5)
            .collect();
        let spec = stft(&samples, win, 320).unwrap();
        let window = hann(win);
        for t in 0..spec.nrows() {
            let row = spec.row(t);
            let mut spec_energy = row[0].norm_sqr() + row[win / 2].norm_sqr();
            for k in 1..win / 2 {
                spec_energy += 2.0 * row[k].norm_sqr();
            }
            spec_energy /= win as f64;

            let start = t * 320;
            let frame_energy: f64 = (0..win)
                .map(|i| {
                    let v = samples[start + i] as f64 * window[i];
                    v * v
                })
                .sum();
            let rel = (spec_energy - frame_energy).abs() / frame_energy.max(1e-12);
            assert!(rel < 1e-6, "frame {t}: rel error {rel}");
        }
    }
}
