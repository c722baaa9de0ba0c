//! Beat tracking evaluation: tolerance-window F-measure and the continuity
//! scores CMLt / AMLt, plus corpus-level aggregation.
//!
//! Conventions, fixed here and relied on by the tests:
//! * events in the first `trim_s` seconds (default 5.0) are dropped from both
//!   estimates and references before anything is computed;
//! * the F-measure tolerance interval is closed (a hit at exactly 70 ms
//!   counts) and matching is greedy in time order, earliest reference first;
//! * continuity tolerance is `theta = 0.175` of the local reference interval,
//!   applied to both beat position and inter-beat interval; an estimate
//!   counts only if the previous estimate also hits (the first may stand
//!   alone); the denominator is `max(|est|, |ref|)`;
//! * AMLt maximizes CMLt over the reference variants
//!   {original, double, half, triple, one-third, off-beat}.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ingest::{parse_beats, BeatAnnotation};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Events before this time are ignored on both sides.
    pub trim_s: f64,
    /// Half-width of the F-measure window.
    pub f_tol_s: f64,
    /// Continuity tolerance as a fraction of the local reference interval.
    pub theta: f64,
    /// Also evaluate downbeats (references with metrical position 1).
    pub downbeat: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { trim_s: 5.0, f_tol_s: 0.07, theta: 0.175, downbeat: false }
    }
}

/// Drop events before `cutoff_s`; input must be sorted.
pub fn trim(times: &[f64], cutoff_s: f64) -> Vec<f64> {
    times.iter().copied().filter(|&t| t >= cutoff_s).collect()
}

/// Greedy one-to-one matching count: estimates in time order, each taking the
/// earliest still-unmatched reference within the closed tolerance window.
pub fn match_events(est: &[f64], reference: &[f64], tol_s: f64) -> usize {
    let mut matched = vec![false; reference.len()];
    let mut hits = 0;
    for &e in est {
        for (j, &r) in reference.iter().enumerate() {
            if !matched[j] && (e - r).abs() <= tol_s {
                matched[j] = true;
                hits += 1;
                break;
            }
        }
    }
    hits
}

/// F-measure with a ±`tol_s` window. Both sides empty scores 1, one side
/// empty scores 0.
pub fn f_measure(est: &[f64], reference: &[f64], tol_s: f64) -> f64 {
    if est.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if est.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let hits = match_events(est, reference, tol_s);
    if hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / est.len() as f64;
    let recall = hits as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Local reference interval at index `j`: distance to the previous reference
/// beat, with the first beat borrowing the interval after it.
fn local_interval(reference: &[f64], j: usize) -> f64 {
    if j == 0 {
        reference[1] - reference[0]
    } else {
        reference[j] - reference[j - 1]
    }
}

/// Per-estimate hit flags for the continuity metrics: the nearest reference
/// (ties to the earlier one) must be within `theta` of its local interval in
/// position, and the estimate's own interval must agree within the same
/// margin.
fn continuity_hits(est: &[f64], reference: &[f64], theta: f64) -> Vec<bool> {
    let mut hits = Vec::with_capacity(est.len());
    for (i, &e) in est.iter().enumerate() {
        let mut nearest = 0usize;
        let mut best = f64::INFINITY;
        for (j, &r) in reference.iter().enumerate() {
            let d = (e - r).abs();
            if d < best {
                best = d;
                nearest = j;
            }
        }
        let ref_int = local_interval(reference, nearest);
        let est_int = if i == 0 { est[1] - est[0] } else { est[i] - est[i - 1] };
        let tol = theta * ref_int;
        hits.push(best <= tol && (est_int - ref_int).abs() <= tol);
    }
    hits
}

/// Correct-at-metrical-level continuity score against one reference sequence.
/// `None` when either side has fewer than 2 events (intervals undefined).
pub fn cmlt(est: &[f64], reference: &[f64], theta: f64) -> Option<f64> {
    if reference.len() < 2 {
        return None;
    }
    if est.len() < 2 {
        // References exist but estimates cannot establish an interval.
        return Some(0.0);
    }
    let hits = continuity_hits(est, reference, theta);
    let mut correct = 0usize;
    for i in 0..hits.len() {
        if hits[i] && (i == 0 || hits[i - 1]) {
            correct += 1;
        }
    }
    Some(correct as f64 / est.len().max(reference.len()) as f64)
}

/// Reference variants AMLt maximizes over, in a fixed documented order:
/// original, double, half, triple, one-third, off-beat.
pub fn reference_variants(reference: &[f64]) -> Vec<Vec<f64>> {
    let m = reference.len();
    let mut variants = Vec::with_capacity(6);
    variants.push(reference.to_vec());

    // Double: midpoints interleaved.
    let mut double = Vec::with_capacity(2 * m.saturating_sub(1) + 1);
    for j in 0..m {
        double.push(reference[j]);
        if j + 1 < m {
            double.push(0.5 * (reference[j] + reference[j + 1]));
        }
    }
    variants.push(double);

    // Half and one-third: every 2nd / 3rd beat starting at the first.
    variants.push(reference.iter().step_by(2).copied().collect());
    let mut triple = Vec::with_capacity(3 * m.saturating_sub(1) + 1);
    for j in 0..m {
        triple.push(reference[j]);
        if j + 1 < m {
            let step = (reference[j + 1] - reference[j]) / 3.0;
            triple.push(reference[j] + step);
            triple.push(reference[j] + 2.0 * step);
        }
    }
    variants.push(triple);
    variants.push(reference.iter().step_by(3).copied().collect());

    // Off-beat: shifted by half the local period.
    variants.push(
        reference.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
    );
    variants
}

/// Best continuity score over the allowed metrical-level variants.
pub fn amlt(est: &[f64], reference: &[f64], theta: f64) -> Option<f64> {
    if reference.len() < 2 {
        return None;
    }
    let mut best: Option<f64> = None;
    for variant in reference_variants(reference) {
        if let Some(score) = cmlt(est, &variant, theta) {
            best = Some(best.map_or(score, |b: f64| b.max(score)));
        }
    }
    best
}

/// Scores for one event class (beats or downbeats) on one track.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeatScores {
    pub f_measure: f64,
    pub cmlt: Option<f64>,
    pub amlt: Option<f64>,
    pub n_est: usize,
    pub n_ref: usize,
    pub matched: usize,
}

pub fn score_events(est: &[f64], reference: &[f64], cfg: &MetricsConfig) -> BeatScores {
    let est = trim(est, cfg.trim_s);
    let reference = trim(reference, cfg.trim_s);
    BeatScores {
        f_measure: f_measure(&est, &reference, cfg.f_tol_s),
        cmlt: cmlt(&est, &reference, cfg.theta),
        amlt: amlt(&est, &reference, cfg.theta),
        matched: match_events(&est, &reference, cfg.f_tol_s),
        n_est: est.len(),
        n_ref: reference.len(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackMetrics {
    pub track: String,
    pub beat: BeatScores,
    pub downbeat: Option<BeatScores>,
}

/// Unweighted means over the tracks that define each value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub f_measure: f64,
    pub cmlt: f64,
    pub amlt: f64,
    pub tracks: usize,
    /// Tracks contributing to the continuity means (others lacked 2+ refs).
    pub continuity_tracks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tracks: Vec<TrackMetrics>,
    pub beat: AggregateMetrics,
    pub downbeat: Option<AggregateMetrics>,
}

fn aggregate<'a>(scores: impl Iterator<Item = &'a BeatScores>) -> AggregateMetrics {
    let mut agg = AggregateMetrics::default();
    let mut f_sum = 0.0;
    let mut c_sum = 0.0;
    let mut a_sum = 0.0;
    for s in scores {
        agg.tracks += 1;
        f_sum += s.f_measure;
        if let (Some(c), Some(a)) = (s.cmlt, s.amlt) {
            agg.continuity_tracks += 1;
            c_sum += c;
            a_sum += a;
        }
    }
    if agg.tracks > 0 {
        agg.f_measure = f_sum / agg.tracks as f64;
    }
    if agg.continuity_tracks > 0 {
        agg.cmlt = c_sum / agg.continuity_tracks as f64;
        agg.amlt = a_sum / agg.continuity_tracks as f64;
    }
    agg
}

/// One evaluation unit: estimate and reference annotations for a track.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub track: String,
    pub est: BeatAnnotation,
    pub reference: BeatAnnotation,
}

pub fn evaluate_tracks(pairs: &[EvalPair], cfg: &MetricsConfig) -> MetricsReport {
    let tracks: Vec<TrackMetrics> = pairs
        .par_iter()
        .map(|p| {
            let beat = score_events(&p.est.beat_times(), &p.reference.beat_times(), cfg);
            let downbeat = cfg.downbeat.then(|| {
                score_events(&p.est.downbeat_times(), &p.reference.downbeat_times(), cfg)
            });
            TrackMetrics { track: p.track.clone(), beat, downbeat }
        })
        .collect();
    let beat = aggregate(tracks.iter().map(|t| &t.beat));
    let downbeat = cfg
        .downbeat
        .then(|| aggregate(tracks.iter().filter_map(|t| t.downbeat.as_ref())));
    MetricsReport { tracks, beat, downbeat }
}

/// Pair `.beats` files in two directories by file stem. Files without a
/// counterpart are reported as warnings, not errors.
pub fn pair_beat_files(est_dir: &Path, ref_dir: &Path) -> Result<(Vec<(String, PathBuf, PathBuf)>, Vec<String>)> {
    fn stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
        let mut out = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CoreError::io(dir, e))?.path();
            if path.extension().map_or(false, |x| x == "beats") {
                if let Some(stem) = path.file_stem() {
                    out.insert(stem.to_string_lossy().into_owned(), path);
                }
            }
        }
        Ok(out)
    }

    let est = stems(est_dir)?;
    let mut reference = stems(ref_dir)?;
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for (stem, est_path) in est {
        match reference.remove(&stem) {
            Some(ref_path) => pairs.push((stem, est_path, ref_path)),
            None => warnings.push(format!("skipping {stem}: no reference annotation")),
        }
    }
    for stem in reference.keys() {
        warnings.push(format!("skipping {stem}: no estimate"));
    }
    Ok((pairs, warnings))
}

pub fn evaluate_dirs(
    est_dir: &Path,
    ref_dir: &Path,
    cfg: &MetricsConfig,
) -> Result<(MetricsReport, Vec<String>)> {
    let (pairs, warnings) = pair_beat_files(est_dir, ref_dir)?;
    let loaded: Vec<EvalPair> = pairs
        .into_iter()
        .map(|(track, est_path, ref_path)| {
            Ok(EvalPair { track, est: parse_beats(&est_path)?, reference: parse_beats(&ref_path)? })
        })
        .collect::<Result<_>>()?;
    Ok((evaluate_tracks(&loaded, cfg), warnings))
}

impl MetricsReport {
    /// Fixed-width text table, one row per track plus the aggregate.
    pub fn to_text(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map_or_else(|| "   -  ".to_string(), |x| format!("{x:6.3}"))
        }
        let mut out = String::new();
        let width = self
            .tracks
            .iter()
            .map(|t| t.track.len())
            .chain(std::iter::once("track".len()))
            .max()
            .unwrap_or(5)
            .max("AGGREGATE".len());
        out.push_str(&format!("{:width$}  {:>6}  {:>6}  {:>6}\n", "track", "F", "CMLt", "AMLt"));
        for t in &self.tracks {
            out.push_str(&format!(
                "{:width$}  {:6.3}  {}  {}\n",
                t.track,
                t.beat.f_measure,
                cell(t.beat.cmlt),
                cell(t.beat.amlt),
            ));
        }
        out.push_str(&format!(
            "{:width$}  {:6.3}  {:6.3}  {:6.3}\n",
            "AGGREGATE", self.beat.f_measure, self.beat.cmlt, self.beat.amlt,
        ));
        if let Some(db) = &self.downbeat {
            out.push_str(&format!(
                "{:width$}  {:6.3}  {:6.3}  {:6.3}\n",
                "DOWNBEAT", db.f_measure, db.cmlt, db.amlt,
            ));
        }
        out
    }
}
