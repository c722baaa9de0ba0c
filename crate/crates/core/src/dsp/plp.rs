//! Predominant local pulse extraction.
//!
//! At every analysis frame a windowed Fourier tempogram is evaluated over a
//! BPM grid; the magnitude-maximal tempo and its phase parameterize a
//! Hann-windowed cosine kernel, and all kernels are overlap-added into a
//! pulse curve that is half-wave rectified before peak picking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::features::FeatureSequence;
use crate::dsp::stft::hann;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlpConfig {
    pub tempo_min_bpm: f64,
    pub tempo_max_bpm: f64,
    pub tempo_step_bpm: f64,
    /// Tempogram analysis window, seconds.
    pub window_s: f64,
    /// Cosine kernel length, seconds.
    pub kernel_s: f64,
    /// Peaks must reach this fraction of the curve maximum.
    pub peak_rel_threshold: f64,
    /// Minimum distance between kept peaks, frames.
    pub peak_min_dist: usize,
}

impl Default for PlpConfig {
    fn default() -> Self {
        PlpConfig {
            tempo_min_bpm: 30.0,
            tempo_max_bpm: 600.0,
            tempo_step_bpm: 1.0,
            window_s: 6.0,
            kernel_s: 3.0,
            peak_rel_threshold: 0.01,
            peak_min_dist: 3,
        }
    }
}

impl PlpConfig {
    fn validate(&self) {
        assert!(self.tempo_min_bpm > 0.0, "tempo grid must start above zero");
        assert!(
            self.tempo_max_bpm >= self.tempo_min_bpm && self.tempo_step_bpm > 0.0,
            "bad tempo grid"
        );
        assert!(self.window_s > 0.0 && self.kernel_s > 0.0, "bad window sizes");
        assert!(self.peak_rel_threshold >= 0.0);
    }
}

/// Pulse curve plus picked peak frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PlpResult {
    /// Non-negative pulse salience per frame.
    pub curve: Vec<f64>,
    /// Strictly increasing frame indices of pulse peaks.
    pub peaks: Vec<usize>,
}

impl PlpResult {
    /// Build a synthetic result whose curve is zero except for unit spikes at
    /// the given peak frames. Peaks must be strictly increasing with a gap of
    /// at least 2 frames so each spike is a strict local maximum.
    pub fn from_peaks(peaks: &[usize], len: usize) -> Result<Self> {
        let mut curve = vec![0.0; len];
        let mut prev: Option<usize> = None;
        for &p in peaks {
            if p >= len {
                return Err(CoreError::InvalidArgument(format!(
                    "peak frame {p} outside curve of length {len}"
                )));
            }
            if let Some(q) = prev {
                if p <= q + 1 {
                    return Err(CoreError::InvalidArgument(format!(
                        "peaks {q} and {p} are not separated strict maxima"
                    )));
                }
            }
            curve[p] = 1.0;
            prev = Some(p);
        }
        Ok(PlpResult {
            curve,
            peaks: peaks.to_vec(),
        })
    }

    /// Peak times in seconds for a given frame-center mapping.
    pub fn peak_times(&self, sample_rate: u32) -> Vec<f64> {
        self.peaks
            .iter()
            .map(|&p| crate::dsp::frame_time(p, sample_rate))
            .collect()
    }
}

/// Fitted tempo/phase of one analysis frame.
struct FrameFit {
    freq_hz: f64,
    phase: f64,
    energy: f64,
}

/// FFT layout for a tempo grid that coincides with DFT bins: transform size
/// and the bin index of the lowest tempo.
struct FftBins {
    n_fft: usize,
    k0: usize,
}

/// Check whether every tempo on the grid falls exactly on a bin of a DFT of
/// some practical size at the curve's frame rate. With a `hop_s` frame period,
/// a size-`n` DFT has bin spacing `60 / (n * hop_s)` BPM, so the grid aligns
/// when `n = 60 / (step * hop_s)` is an integer and the minimum tempo is an
/// integer multiple of the step.
fn aligned_fft_bins(cfg: &PlpConfig, hop_s: f64) -> Option<FftBins> {
    let n_fft_f = 60.0 / (cfg.tempo_step_bpm * hop_s);
    let k0_f = cfg.tempo_min_bpm / cfg.tempo_step_bpm;
    if (n_fft_f - n_fft_f.round()).abs() > 1e-6 || (k0_f - k0_f.round()).abs() > 1e-6 {
        return None;
    }
    let n_fft = n_fft_f.round() as usize;
    let k0 = k0_f.round() as usize;
    if n_fft == 0 || n_fft > 1 << 22 {
        return None;
    }
    let n_tempi =
        ((cfg.tempo_max_bpm - cfg.tempo_min_bpm) / cfg.tempo_step_bpm).floor() as usize + 1;
    // Stay below the conjugate-symmetric half so bin phases match the direct
    // projection without aliasing adjustments.
    if k0 + n_tempi - 1 > n_fft / 2 {
        return None;
    }
    Some(FftBins { n_fft, k0 })
}

/// Per-frame tempo fits via one zero-padded FFT per frame. Windowed samples
/// keep their absolute frame index modulo `n_fft`, which leaves integer-bin
/// phases identical to a direct projection because `exp(-2*pi*i*k*m/n)` only
/// depends on `m mod n`.
fn fit_frames_fft(
    curve_in: &[f64],
    window: &[f64],
    half_w: usize,
    freqs: &[f64],
    grid: &FftBins,
) -> Vec<Option<FrameFit>> {
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;

    let t_len = curve_in.len();
    let n_fft = grid.n_fft;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let scratch_len = fft.get_inplace_scratch_len();

    (0..t_len)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![Complex::new(0.0, 0.0); n_fft],
                    vec![Complex::new(0.0, 0.0); scratch_len],
                )
            },
            |(buf, scratch), t| {
                let lo = t.saturating_sub(half_w);
                let hi = (t + half_w).min(t_len - 1);
                for v in buf.iter_mut() {
                    *v = Complex::new(0.0, 0.0);
                }
                let mut any = false;
                for n in lo..=hi {
                    let v = window[n + half_w - t] * curve_in[n];
                    if v != 0.0 {
                        any = true;
                    }
                    buf[n % n_fft].re += v;
                }
                if !any {
                    return None;
                }
                fft.process_with_scratch(buf, scratch);

                let mut best = FrameFit { freq_hz: freqs[0], phase: 0.0, energy: -1.0 };
                for (i, &f) in freqs.iter().enumerate() {
                    let bin = buf[grid.k0 + i];
                    let energy = bin.re * bin.re + bin.im * bin.im;
                    if energy > best.energy {
                        best = FrameFit { freq_hz: f, phase: bin.im.atan2(bin.re), energy };
                    }
                }
                Some(best)
            },
        )
        .collect()
}

/// Per-frame tempo fits by projecting the windowed curve onto each tempo's
/// complex exponential directly. Handles arbitrary tempo grids.
fn fit_frames_direct(
    curve_in: &[f64],
    window: &[f64],
    half_w: usize,
    freqs: &[f64],
    hop_s: f64,
) -> Vec<Option<FrameFit>> {
    let t_len = curve_in.len();
    (0..t_len)
        .into_par_iter()
        .map(|t| {
            let lo = t.saturating_sub(half_w);
            let hi = (t + half_w).min(t_len - 1);
            let mut windowed = Vec::with_capacity(hi - lo + 1);
            let mut any = false;
            for n in lo..=hi {
                let v = window[n + half_w - t] * curve_in[n];
                if v != 0.0 {
                    any = true;
                }
                windowed.push(v);
            }
            if !any {
                return None;
            }

            let mut best = FrameFit { freq_hz: freqs[0], phase: 0.0, energy: -1.0 };
            for &f in freqs {
                let delta = 2.0 * std::f64::consts::PI * f * hop_s;
                // e^{-i * delta * n} starting at n = lo, advanced by rotation.
                let (s0, c0) = (delta * lo as f64).sin_cos();
                let (sd, cd) = delta.sin_cos();
                let (mut re_rot, mut im_rot) = (c0, -s0);
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for &u in &windowed {
                    re += u * re_rot;
                    im += u * im_rot;
                    let nr = re_rot * cd + im_rot * sd;
                    im_rot = im_rot * cd - re_rot * sd;
                    re_rot = nr;
                }
                let energy = re * re + im * im;
                if energy > best.energy {
                    best = FrameFit { freq_hz: f, phase: im.atan2(re), energy };
                }
            }
            Some(best)
        })
        .collect()
}

/// Extract the predominant local pulse from an onset strength curve.
pub fn plp(osf: &FeatureSequence, cfg: &PlpConfig) -> PlpResult {
    cfg.validate();
    assert_eq!(osf.dim(), 1, "plp expects a one-dimensional onset curve");
    let t_len = osf.num_frames();
    if t_len == 0 {
        return PlpResult { curve: Vec::new(), peaks: Vec::new() };
    }
    let hop_s = osf.hop_s;
    let curve_in: Vec<f64> = osf.frames.column(0).to_vec();

    let mut win_frames = ((cfg.window_s / hop_s).round() as usize).max(3);
    if win_frames % 2 == 0 {
        win_frames += 1;
    }
    let half_w = win_frames / 2;
    let window = hann(win_frames);

    let n_tempi = ((cfg.tempo_max_bpm - cfg.tempo_min_bpm) / cfg.tempo_step_bpm).floor() as usize + 1;
    let freqs: Vec<f64> = (0..n_tempi)
        .map(|i| (cfg.tempo_min_bpm + i as f64 * cfg.tempo_step_bpm) / 60.0)
        .collect();

    // Best tempo fit per frame. Frames whose window sees no energy are skipped.
    // When the tempo grid lines up with DFT bin spacing the per-frame scan is
    // one zero-padded FFT; otherwise each tempo is projected directly.
    let fits = match aligned_fft_bins(cfg, hop_s) {
        Some(grid) => fit_frames_fft(&curve_in, &window, half_w, &freqs, &grid),
        None => fit_frames_direct(&curve_in, &window, half_w, &freqs, hop_s),
    };

    // Overlap-add phase-locked cosine kernels, normalized by accumulated
    // window weight so edges keep a comparable scale.
    let mut kernel_frames = ((cfg.kernel_s / hop_s).round() as usize).max(3);
    if kernel_frames % 2 == 0 {
        kernel_frames += 1;
    }
    let half_k = kernel_frames / 2;
    let kwin = hann(kernel_frames);

    let mut acc = vec![0.0f64; t_len];
    let mut weight = vec![0.0f64; t_len];
    for (t, fit) in fits.iter().enumerate() {
        let Some(fit) = fit else { continue };
        let omega = 2.0 * std::f64::consts::PI * fit.freq_hz * hop_s;
        let lo = t.saturating_sub(half_k);
        let hi = (t + half_k).min(t_len - 1);
        for n in lo..=hi {
            let w = kwin[n + half_k - t];
            acc[n] += w * (omega * n as f64 + fit.phase).cos();
            weight[n] += w;
        }
    }
    let curve: Vec<f64> = acc
        .iter()
        .zip(&weight)
        .map(|(&a, &w)| if w > 0.0 { (a / w).max(0.0) } else { 0.0 })
        .collect();

    let peaks = pick_curve_peaks(&curve, cfg.peak_rel_threshold, cfg.peak_min_dist);
    PlpResult { curve, peaks }
}

/// Strict local maxima above `rel_threshold * max(curve)`, greedily thinned so
/// surviving peaks are at least `min_dist` frames apart (higher peaks win,
/// earlier frames win ties).
pub fn pick_curve_peaks(curve: &[f64], rel_threshold: f64, min_dist: usize) -> Vec<usize> {
    if curve.len() < 3 {
        return Vec::new();
    }
    let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let floor = rel_threshold * max;

    let mut candidates: Vec<usize> = (1..curve.len() - 1)
        .filter(|&i| curve[i] > curve[i - 1] && curve[i] > curve[i + 1] && curve[i] >= floor)
        .collect();
    candidates.sort_by(|&a, &b| curve[b].total_cmp(&curve[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for i in candidates {
        if kept.iter().all(|&k| k.abs_diff(i) >= min_dist) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}
