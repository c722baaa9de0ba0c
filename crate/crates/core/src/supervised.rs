//! Supervised beat losses and activation decoding.
//!
//! Two losses over per-frame activation curves: plain weighted BCE against
//! widened targets, and a shift-tolerant variant (max-pooled predictions,
//! masked negatives, class-balanced positives). Plus peak-picking to turn
//! activations back into event times.

use crate::dsp::frame_time;
use crate::error::{CoreError, Result};
use crate::ingest::{BeatAnnotation, BeatEvent, TARGET_SAMPLE_RATE};

/// Distance from the (0, 1) boundaries activations are clamped to before
/// taking logs.
pub const ACT_CLAMP: f64 = 1e-7;

/// Decoding defaults: activation threshold and minimum peak separation.
pub const PEAK_THRESHOLD: f64 = 0.5;
pub const PEAK_MIN_DIST: usize = 7;

fn clamp_act(x: f64) -> f64 {
    x.clamp(ACT_CLAMP, 1.0 - ACT_CLAMP)
}

fn check_activation(act: &[f64]) -> Result<()> {
    if act.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
        return Err(CoreError::InvalidArgument(
            "activations must be finite and within [0, 1]".into(),
        ));
    }
    Ok(())
}

/// Binary labels with widened per-frame positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSequence {
    /// Positive-term weights in {0, 0.5, 1}.
    pub weights: Vec<f64>,
    /// The original binary labels.
    pub raw: Vec<bool>,
}

/// Give frames within `radius` of a positive label a half weight; the labeled
/// frames themselves keep weight 1 (max wins on overlap).
pub fn widen_targets(raw: &[bool], radius: usize) -> TargetSequence {
    let t_len = raw.len();
    let mut weights = vec![0.0; t_len];
    for (t, &pos) in raw.iter().enumerate() {
        if !pos {
            continue;
        }
        weights[t] = 1.0;
        let lo = t.saturating_sub(radius);
        let hi = (t + radius).min(t_len.saturating_sub(1));
        for w in weights.iter_mut().take(hi + 1).skip(lo) {
            if *w < 0.5 {
                *w = 0.5;
            }
        }
    }
    TargetSequence { weights, raw: raw.to_vec() }
}

/// Frame-mean BCE with widened positive weights:
/// `-(1/T) Σ_t [w_t ln(act_t) + [w_t = 0] ln(1 - act_t)]`.
///
/// Widened neighbors are positive targets (at half weight), so the negative
/// term only applies to frames with zero weight — otherwise a neighbor frame
/// would be rewarded and punished at once and a perfect fit could not
/// approach zero loss.
pub fn weighted_bce(act: &[f64], targets: &TargetSequence) -> Result<f64> {
    if act.len() != targets.raw.len() {
        return Err(CoreError::Shape(format!(
            "{} activations against {} targets",
            act.len(),
            targets.raw.len()
        )));
    }
    if act.is_empty() {
        return Err(CoreError::InvalidArgument("empty activation sequence".into()));
    }
    check_activation(act)?;
    let mut sum = 0.0;
    for (t, &a) in act.iter().enumerate() {
        let a = clamp_act(a);
        let w = targets.weights[t];
        sum -= if w > 0.0 { w * a.ln() } else { (1.0 - a).ln() };
    }
    Ok(sum / act.len() as f64)
}

/// Centered max-pool of width `width`; edge windows truncate instead of
/// padding, so boundaries never see phantom values.
pub fn max_pool(x: &[f64], width: usize) -> Vec<f64> {
    assert!(width % 2 == 1, "pool width must be odd");
    let half = width / 2;
    let t_len = x.len();
    (0..t_len)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(t_len - 1);
            x[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Ratio of negative to positive frames.
pub fn class_balance(raw: &[bool]) -> Result<f64> {
    let pos = raw.iter().filter(|&&b| b).count();
    if pos == 0 {
        return Err(CoreError::NoPositiveFrames);
    }
    Ok((raw.len() - pos) as f64 / pos as f64)
}

/// The two additive pieces of the shift-tolerant loss, before negation.
#[derive(Debug, Clone, Copy)]
pub struct StBceBreakdown {
    /// `Σ_t α y_t ln(m7(act)_t)` — rewards any confident activation within
    /// ±3 frames of a label.
    pub positive: f64,
    /// `Σ_t (1 - m13(y)_t) ln(1 - m7(act)_t)` — penalizes activations except
    /// within ±6 frames of a label.
    pub negative: f64,
    pub alpha: f64,
}

impl StBceBreakdown {
    pub fn loss(&self) -> f64 {
        -(self.positive + self.negative)
    }
}

/// Shift-tolerant weighted BCE, summed over frames:
/// `-Σ_t [α y_t ln(m7(ŷ)_t) + (1 - m13(y)_t) ln(1 - m7(ŷ)_t)]`
/// with `m_l` a centered width-`l` max-pool and `α` the negative/positive
/// frame ratio.
pub fn st_bce_split(act: &[f64], raw: &[bool]) -> Result<StBceBreakdown> {
    if act.len() != raw.len() {
        return Err(CoreError::Shape(format!(
            "{} activations against {} targets",
            act.len(),
            raw.len()
        )));
    }
    if act.is_empty() {
        return Err(CoreError::InvalidArgument("empty activation sequence".into()));
    }
    check_activation(act)?;
    let alpha = class_balance(raw)?;

    let clamped: Vec<f64> = act.iter().map(|&a| clamp_act(a)).collect();
    let m7 = max_pool(&clamped, 7);
    let y: Vec<f64> = raw.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let m13 = max_pool(&y, 13);

    let mut positive = 0.0;
    let mut negative = 0.0;
    for t in 0..act.len() {
        if raw[t] {
            positive += alpha * m7[t].ln();
        }
        negative += (1.0 - m13[t]) * (1.0 - m7[t]).ln();
    }
    Ok(StBceBreakdown { positive, negative, alpha })
}

pub fn st_bce(act: &[f64], raw: &[bool]) -> Result<f64> {
    Ok(st_bce_split(act, raw)?.loss())
}

/// Strict interior local maxima above `threshold`, thinned greedily from the
/// highest so survivors sit at least `min_dist` frames apart.
pub fn pick_peaks(act: &[f64], threshold: f64, min_dist: usize) -> Vec<usize> {
    if act.len() < 3 {
        return Vec::new();
    }
    let mut candidates: Vec<usize> = (1..act.len() - 1)
        .filter(|&t| act[t] > act[t - 1] && act[t] > act[t + 1] && act[t] > threshold)
        .collect();
    candidates.sort_by(|&a, &b| act[b].total_cmp(&act[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for t in candidates {
        if kept.iter().all(|&k| k.abs_diff(t) >= min_dist) {
            kept.push(t);
        }
    }
    kept.sort_unstable();
    kept
}

/// Decode beat (and optionally downbeat) activations into an annotation on
/// the pipeline's frame clock. A beat within 3 frames of a decoded downbeat
/// is marked as bar position 1, the rest as 0.
pub fn decode_annotation(
    beat_act: &[f64],
    downbeat_act: Option<&[f64]>,
    threshold: f64,
    min_dist: usize,
) -> BeatAnnotation {
    let beats = pick_peaks(beat_act, threshold, min_dist);
    let downbeats = downbeat_act.map(|d| pick_peaks(d, threshold, min_dist)).unwrap_or_default();
    let events = beats
        .iter()
        .map(|&t| {
            let is_down = downbeats.iter().any(|&d| d.abs_diff(t) <= 3);
            BeatEvent {
                time: frame_time(t, TARGET_SAMPLE_RATE),
                position: if is_down { 1 } else { 0 },
            }
        })
        .collect();
    BeatAnnotation { events }
}
