//! Onset strength: spectral flux against a band-max-filtered earlier frame,
//! plus a moving-average high-pass for the pulse stage.

use ndarray::Array2;

use crate::dsp::features::{FeatureKind, FeatureSequence};

/// Default frame lag for the flux difference.
pub const DEFAULT_LAG: usize = 1;
/// Default width of the across-band max filter.
pub const DEFAULT_MAX_BANDS: usize = 3;
/// Default moving-average window for the high-pass, seconds.
pub const DEFAULT_HIGHPASS_S: f64 = 1.0;

/// Onset strength curve from a log-mel sequence.
///
/// `osf[t] = sum_b max(0, mel[t, b] - maxfilter(mel[t - lag, .])[b])` where the
/// max filter spans `max_bands` adjacent bands (clamped at the edges). The
/// first `lag` frames are zero.
pub fn superflux_osf(mel: &FeatureSequence, lag: usize, max_bands: usize) -> FeatureSequence {
    assert!(lag >= 1, "flux lag must be at least 1 frame");
    assert!(max_bands >= 1, "max filter needs at least one band");
    let t_len = mel.num_frames();
    let d = mel.dim();
    let half = max_bands / 2;

    let mut out = Array2::zeros((t_len, 1));
    let mut filtered = vec![0.0f64; d];
    for t in lag..t_len {
        let prev = mel.row(t - lag);
        for b in 0..d {
            let lo = b.saturating_sub(half);
            let hi = (b + half).min(d - 1);
            let mut m = f64::NEG_INFINITY;
            for i in lo..=hi {
                m = m.max(prev[i]);
            }
            filtered[b] = m;
        }
        let cur = mel.row(t);
        let mut acc = 0.0;
        for b in 0..d {
            let diff = cur[b] - filtered[b];
            if diff > 0.0 {
                acc += diff;
            }
        }
        out[[t, 0]] = acc;
    }
    FeatureSequence {
        frames: out,
        hop_s: mel.hop_s,
        kind: FeatureKind::Osf,
    }
}

/// Subtract a centered moving average (window `window_s`, forced to an odd
/// frame count) from a one-dimensional curve. The window is full-length
/// everywhere: indices past an edge clamp to the boundary sample. Clamping
/// still cancels a constant level exactly, but unlike mirroring it never
/// counts a boundary-adjacent onset twice, which would gouge a false
/// half-period dip into the baseline right where tempo windows are most
/// edge-heavy.
pub fn highpass(osf: &FeatureSequence, window_s: f64) -> FeatureSequence {
    assert_eq!(osf.dim(), 1, "highpass expects a one-dimensional curve");
    let t_len = osf.num_frames();
    let mut w = ((window_s / osf.hop_s).round() as usize).max(1);
    if w % 2 == 0 {
        w += 1;
    }
    let half = w as isize / 2;
    let last = t_len.saturating_sub(1) as isize;

    let clamp = |i: isize| -> usize { i.clamp(0, last) as usize };

    let mut out = Array2::zeros((t_len, 1));
    for t in 0..t_len as isize {
        let mut sum = 0.0;
        for off in -half..=half {
            sum += osf.frames[[clamp(t + off), 0]];
        }
        let mean = sum / w as f64;
        out[[t as usize, 0]] = osf.frames[[t as usize, 0]] - mean;
    }
    FeatureSequence {
        frames: out,
        hop_s: osf.hop_s,
        kind: FeatureKind::Osf,
    }
}

/// High-pass window length in frames for a given hop (odd, at least 1).
pub fn highpass_window_frames(window_s: f64, hop_s: f64) -> usize {
    let mut w = ((window_s / hop_s).round() as usize).max(1);
    if w % 2 == 0 {
        w += 1;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn curve(values: &[f64]) -> FeatureSequence {
        let frames = Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap();
        FeatureSequence::new(frames, 0.02, FeatureKind::Osf).unwrap()
    }

    fn mel_from_rows(rows: Vec<Vec<f64>>) -> FeatureSequence {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let frames = Array2::from_shape_vec((rows.len(), d), flat).unwrap();
        FeatureSequence::new(frames, 0.02, FeatureKind::Mel).unwrap()
    }

    #[test]
    fn constant_input_gives_zero_flux() {
        let mel = mel_from_rows(vec![vec![2.0; 8]; 10]);
        let osf = superflux_osf(&mel, 1, 3);
        assert!(osf.frames.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_band_step_counts_once() {
        // Step in one band between frames 1 and 2; neighbors max-filter the
        // earlier frame, so only the rise above the local max survives.
        let mut rows = vec![vec![0.0; 8]; 4];
        rows[2][3] = 5.0;
        rows[3][3] = 5.0;
        let mel = mel_from_rows(rows);
        let osf = superflux_osf(&mel, 1, 3);
        assert_eq!(osf.frames[[0, 0]], 0.0);
        assert_eq!(osf.frames[[1, 0]], 0.0);
        assert_eq!(osf.frames[[2, 0]], 5.0);
        // Frame 3: previous frame already contains the 5.0, max filter covers it.
        assert_eq!(osf.frames[[3, 0]], 0.0);
    }

    #[test]
    fn first_lag_frames_are_zero() {
        let mel = mel_from_rows(vec![vec![1.0; 4], vec![9.0; 4], vec![9.0; 4]]);
        let osf = superflux_osf(&mel, 2, 3);
        assert_eq!(osf.frames[[0, 0]], 0.0);
        assert_eq!(osf.frames[[1, 0]], 0.0);
        assert!(osf.frames[[2, 0]] > 0.0);
    }

    #[test]
    fn negative_flux_is_rectified_away() {
        let mel = mel_from_rows(vec![vec![5.0; 4], vec![0.0; 4], vec![0.0; 4]]);
        let osf = superflux_osf(&mel, 1, 3);
        assert!(osf.frames.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn highpass_reduces_interior_impulse_by_inverse_window() {
        let mut values = vec![0.0; 400];
        values[200] = 1.0;
        let out = highpass(&curve(&values), 1.0);
        let w = highpass_window_frames(1.0, 0.02) as f64;
        assert!((out.frames[[200, 0]] - (1.0 - 1.0 / w)).abs() < 1e-12);
    }

    #[test]
    fn highpass_sum_vanishes_for_edge_free_signals() {
        // Signal supported well away from both edges: every window covering
        // support is interior, so the moving average redistributes exactly
        // and the output sums to 0.
        let mut values = vec![0.0; 1000];
        for (i, v) in values.iter_mut().enumerate().take(800).skip(200) {
            *v = ((i as f64) * 0.37).sin().abs() + 0.2;
        }
        let out = highpass(&curve(&values), 1.0);
        let total: f64 = out.frames.iter().sum();
        assert!(total.abs() < 1e-6 * values.len() as f64, "sum = {total}");
    }

    #[test]
    fn highpass_removes_constant_level() {
        let values = vec![3.5; 300];
        let out = highpass(&curve(&values), 1.0);
        // Clamped mean of a constant is that constant, even at edges.
        assert!(out.frames.iter().all(|&v| v.abs() < 1e-12));
    }
}
