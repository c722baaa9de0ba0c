//! Contrastive hypothesis scores, running-mean score tables, and
//! winner-take-all selection.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::dsp::features::FeatureSequence;
use crate::error::{CoreError, Result};
use crate::hypothesis::{Hypothesis, HypothesisPool, TripletSet};

/// Score of one hypothesis on one triplet draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisScore {
    /// Lower is better: positives similar to the anchor, negatives dissimilar.
    pub value: f64,
    /// Set when a zero-norm feature row was hit (its similarities count as 0).
    pub degenerate: bool,
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> (f64, bool) {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return (0.0, true);
    }
    (a.dot(&b) / (na * nb), false)
}

/// Score a hypothesis triplet on a feature sequence.
///
/// For each positive `p` the anchor similarity `sim(A, p)` is compared, via a
/// temperature-scaled softmax, against the similarities of all negatives:
///
/// `score = -sum_p log( exp(sim(A,p)/tau) / sum_n exp(sim(A,n)/tau) )`
///
/// Note the denominator runs over negatives only. Low scores mean the
/// hypothesis explains the chunk well.
pub fn score_hypothesis(
    feat: &FeatureSequence,
    triplet: &TripletSet,
    tau: f64,
) -> Result<HypothesisScore> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(CoreError::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    if triplet.positives.is_empty() || triplet.negatives.is_empty() {
        return Err(CoreError::InvalidArgument("triplet needs positives and negatives".into()));
    }
    let t_len = feat.num_frames();
    let frame_ok = |i: usize| i < t_len;
    if !frame_ok(triplet.anchor)
        || triplet.positives.iter().any(|&p| !frame_ok(p))
        || triplet.negatives.iter().any(|n| !frame_ok(n.frame))
    {
        return Err(CoreError::Shape(format!(
            "triplet frame out of range for {t_len} feature frames"
        )));
    }

    let anchor = feat.row(triplet.anchor);
    let mut degenerate = false;

    let mut denom = 0.0f64;
    for n in &triplet.negatives {
        let (sim, degen) = cosine(anchor, feat.row(n.frame));
        degenerate |= degen;
        denom += (sim / tau).exp();
    }
    let log_denom = denom.ln();

    let mut value = 0.0f64;
    for &p in &triplet.positives {
        let (sim, degen) = cosine(anchor, feat.row(p));
        degenerate |= degen;
        value -= sim / tau - log_denom;
    }
    Ok(HypothesisScore { value, degenerate })
}

/// Per-chunk running means of hypothesis scores across scoring epochs.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    entries: BTreeMap<String, ChunkScores>,
    /// Cap on retained per-epoch raw score vectors (`None` = keep all).
    pub history_cap: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ChunkScores {
    mean: Vec<f64>,
    epochs: usize,
    history: Vec<Vec<f64>>,
}

impl ChunkScores {
    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn history(&self) -> &[Vec<f64>] {
        &self.history
    }
}

impl ScoreTable {
    pub fn new() -> Self {
        ScoreTable::default()
    }

    /// Fold one epoch of raw scores into the chunk's running means:
    /// `mean <- (epochs * mean + raw) / (epochs + 1)`.
    pub fn update(&mut self, chunk_id: &str, raw: &[f64]) -> Result<()> {
        match self.entries.get_mut(chunk_id) {
            None => {
                self.entries.insert(
                    chunk_id.to_string(),
                    ChunkScores { mean: raw.to_vec(), epochs: 1, history: vec![raw.to_vec()] },
                );
            }
            Some(entry) => {
                if entry.mean.len() != raw.len() {
                    return Err(CoreError::Shape(format!(
                        "score vector of {} entries, table holds {}",
                        raw.len(),
                        entry.mean.len()
                    )));
                }
                let e = entry.epochs as f64;
                for (m, &r) in entry.mean.iter_mut().zip(raw) {
                    *m = (e * *m + r) / (e + 1.0);
                }
                entry.epochs += 1;
                entry.history.push(raw.to_vec());
            }
        }
        if let Some(cap) = self.history_cap {
            let entry = self.entries.get_mut(chunk_id).expect("entry just touched");
            while entry.history.len() > cap {
                entry.history.remove(0);
            }
        }
        Ok(())
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&ChunkScores> {
        self.entries.get(chunk_id)
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }
}

/// Winners of an n-smallest-score selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Indices of the selected hypotheses, ascending.
    pub winners: Vec<usize>,
    /// The scores the selection was made from.
    pub scores: Vec<f64>,
}

/// Select the `n` hypotheses with the smallest scores. Ties resolve toward
/// the lower index; NaN scores sort as positive infinity.
pub fn select_n_wta(scores: &[f64], n: usize) -> Result<SelectionResult> {
    if n == 0 || n > scores.len() {
        return Err(CoreError::InvalidArgument(format!(
            "cannot select {n} winners from {} scores",
            scores.len()
        )));
    }
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(scores[a]).total_cmp(&key(scores[b])).then(a.cmp(&b)));
    let mut winners: Vec<usize> = order[..n].to_vec();
    winners.sort_unstable();
    Ok(SelectionResult { winners, scores: scores.to_vec() })
}

/// Rank a pool's hypotheses by score, best (lowest) first; ties resolve
/// toward the lower pool index.
pub fn rank_hypotheses(pool: &HypothesisPool, scores: &[f64]) -> Result<Vec<Hypothesis>> {
    if scores.len() != pool.len() {
        return Err(CoreError::Shape(format!(
            "{} scores for a pool of {}",
            scores.len(),
            pool.len()
        )));
    }
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| key(scores[a]).total_cmp(&key(scores[b])).then(a.cmp(&b)));
    Ok(order.into_iter().map(|i| pool.hypotheses()[i]).collect())
}

/// Accuracy notions for comparing a ranked hypothesis list against a truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyMode {
    /// Top-k contains exactly the true `(omega, phi)`.
    Exact,
    /// Top-k contains some `(m * omega, phi')` with `phi' = phi (mod omega)`.
    Octave,
    /// Top-k contains some hypothesis with the true `omega`.
    MetricLevel,
}

/// Whether a hypothesis counts as correct for a truth under a mode.
pub fn hypothesis_matches(candidate: Hypothesis, truth: Hypothesis, mode: AccuracyMode) -> bool {
    match mode {
        AccuracyMode::Exact => candidate == truth,
        AccuracyMode::Octave => {
            candidate.omega % truth.omega == 0
                && candidate.omega >= truth.omega
                && candidate.phi % truth.omega == truth.phi % truth.omega
        }
        AccuracyMode::MetricLevel => candidate.omega == truth.omega,
    }
}

/// Check whether the top `k` of a ranked hypothesis list contains a correct
/// hypothesis for `truth` under the given accuracy mode.
pub fn selection_accuracy(
    ranked: &[Hypothesis],
    truth: Hypothesis,
    k: usize,
    mode: AccuracyMode,
) -> Result<bool> {
    if k == 0 || k > ranked.len() {
        return Err(CoreError::InvalidArgument(format!(
            "top-k of {k} out of range for {} ranked hypotheses",
            ranked.len()
        )));
    }
    if !ranked.contains(&truth) {
        return Err(CoreError::InvalidArgument(format!(
            "truth {truth} not representable in the ranked pool"
        )));
    }
    Ok(ranked[..k].iter().any(|&h| hypothesis_matches(h, truth, mode)))
}
