//! Tempo/phase hypotheses over pulse peaks.
//!
//! A hypothesis `(omega, phi)` selects every `omega`-th entry of a chunk's
//! peak list starting at 1-based position `phi` (peaks at list positions
//! `omega * k + phi` for integer `k >= 0` that land in `1..=B`). The pool over
//! a ratio set `{1, 2, 3, 4}` therefore holds `1 + 2 + 3 + 4 = 10` hypotheses.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::plp::PlpResult;
use crate::error::{CoreError, Result};

/// Subsampling ratio `omega` and offset `phi` (`0 <= phi < omega`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hypothesis {
    pub omega: usize,
    pub phi: usize,
}

impl Hypothesis {
    pub fn new(omega: usize, phi: usize) -> Result<Self> {
        if omega == 0 {
            return Err(CoreError::InvalidArgument("omega must be at least 1".into()));
        }
        if phi >= omega {
            return Err(CoreError::InvalidArgument(format!(
                "phi {phi} out of range for omega {omega}"
            )));
        }
        Ok(Hypothesis { omega, phi })
    }
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.omega, self.phi)
    }
}

/// Ordered pool of all `(omega, phi)` combinations over a ratio set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisPool {
    hypotheses: Vec<Hypothesis>,
    ratios: Vec<usize>,
}

impl HypothesisPool {
    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn ratios(&self) -> &[usize] {
        &self.ratios
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// Index of a hypothesis within the pool ordering.
    pub fn index_of(&self, h: Hypothesis) -> Option<usize> {
        self.hypotheses.iter().position(|&x| x == h)
    }
}

/// Build the hypothesis pool for a set of subsampling ratios, ordered by
/// `omega` then `phi`. Duplicate ratios collapse.
pub fn build_pool(ratios: &[usize]) -> Result<HypothesisPool> {
    if ratios.is_empty() {
        return Err(CoreError::InvalidArgument("empty ratio set".into()));
    }
    if ratios.contains(&0) {
        return Err(CoreError::InvalidArgument("ratio 0 is not a valid omega".into()));
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut hypotheses = Vec::with_capacity(sorted.iter().sum());
    for &omega in &sorted {
        for phi in 0..omega {
            hypotheses.push(Hypothesis { omega, phi });
        }
    }
    Ok(HypothesisPool { hypotheses, ratios: sorted })
}

/// Indices into the peak list selected by a hypothesis: 1-based positions
/// `omega * k + phi` clipped to `1..=B`, returned as 0-based indices.
pub fn subset_indices(num_peaks: usize, h: Hypothesis) -> Vec<usize> {
    let mut out = Vec::new();
    let mut pos = if h.phi == 0 { h.omega } else { h.phi };
    while pos <= num_peaks {
        out.push(pos - 1);
        pos += h.omega;
    }
    out
}

/// Peak frames selected from a pulse result by a hypothesis.
pub fn subset(plp: &PlpResult, h: Hypothesis) -> Vec<usize> {
    subset_indices(plp.peaks.len(), h)
        .into_iter()
        .map(|i| plp.peaks[i])
        .collect()
}

/// Check whether a chunk's pulse peaks form a steady grid: every pair of
/// successive inter-peak intervals may differ by at most `max_rel_var`
/// relative to the earlier interval. Chunks with fewer than 3 peaks are
/// rejected outright.
pub fn admissible(plp: &PlpResult, max_rel_var: f64) -> bool {
    assert!(max_rel_var >= 0.0);
    if plp.peaks.len() < 3 {
        return false;
    }
    let intervals: Vec<f64> = plp
        .peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    intervals
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() / w[0] <= max_rel_var)
}

/// Role of a sampled negative frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeKind {
    /// A pulse peak outside the hypothesis subset.
    Hard,
    /// A non-peak frame at least 2 frames away from every peak.
    Easy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negative {
    pub frame: usize,
    pub kind: NegativeKind,
}

/// Anchor, positives, and negatives for one contrastive comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSet {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<Negative>,
}

/// Sampling sizes for [`sample_triplets`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TripletConfig {
    pub n_positives: usize,
    pub n_negatives: usize,
    /// Fraction of negatives drawn from off-subset peaks when available.
    pub hard_fraction: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig { n_positives: 4, n_negatives: 16, hard_fraction: 0.5 }
    }
}

/// Sample a contrastive triplet for one hypothesis.
///
/// The anchor is drawn uniformly from the hypothesis subset, positives
/// uniformly without replacement from the rest of the subset, and negatives
/// from two pools: "hard" negatives are peaks outside the subset, "easy"
/// negatives are non-peak frames at least 2 frames from every peak. A
/// `hard_fraction` share of negatives is drawn hard when available; any
/// shortfall is backfilled from the other pool.
pub fn sample_triplets<R: Rng>(
    plp: &PlpResult,
    t_len: usize,
    h: Hypothesis,
    cfg: &TripletConfig,
    rng: &mut R,
) -> Result<TripletSet> {
    if cfg.n_positives == 0 || cfg.n_negatives == 0 {
        return Err(CoreError::InvalidArgument(
            "need at least one positive and one negative".into(),
        ));
    }
    if !(0.0..=1.0).contains(&cfg.hard_fraction) {
        return Err(CoreError::InvalidArgument(format!(
            "hard fraction {} outside [0, 1]",
            cfg.hard_fraction
        )));
    }

    let sub = subset(plp, h);
    if sub.len() < cfg.n_positives + 1 {
        return Err(CoreError::Unsamplable {
            omega: h.omega,
            phi: h.phi,
            message: format!(
                "subset has {} peaks, need {} for anchor plus positives",
                sub.len(),
                cfg.n_positives + 1
            ),
        });
    }

    let anchor_pos = rng.gen_range(0..sub.len());
    let anchor = sub[anchor_pos];
    let mut rest: Vec<usize> = sub
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != anchor_pos)
        .map(|(_, &f)| f)
        .collect();
    rest.shuffle(rng);
    let positives: Vec<usize> = rest[..cfg.n_positives].to_vec();

    // Hard pool: peaks not selected by the hypothesis.
    let mut hard_pool: Vec<usize> = plp
        .peaks
        .iter()
        .copied()
        .filter(|f| !sub.contains(f))
        .collect();
    // Easy pool: frames at distance >= 2 from every peak.
    let mut easy_pool: Vec<usize> = (0..t_len)
        .filter(|&t| plp.peaks.iter().all(|&p| t.abs_diff(p) >= 2))
        .collect();

    let want_hard = ((cfg.hard_fraction * cfg.n_negatives as f64).round() as usize)
        .min(cfg.n_negatives);
    hard_pool.shuffle(rng);
    easy_pool.shuffle(rng);

    let n_hard = want_hard.min(hard_pool.len());
    let n_easy = (cfg.n_negatives - n_hard).min(easy_pool.len());
    // Backfill a shortfall of easy negatives from the remaining hard pool.
    let n_hard = (cfg.n_negatives - n_easy).min(hard_pool.len());
    if n_hard + n_easy < cfg.n_negatives {
        return Err(CoreError::Unsamplable {
            omega: h.omega,
            phi: h.phi,
            message: format!(
                "negative pools hold {} hard + {} easy frames, need {}",
                hard_pool.len(),
                easy_pool.len(),
                cfg.n_negatives
            ),
        });
    }

    let mut negatives: Vec<Negative> = hard_pool[..n_hard]
        .iter()
        .map(|&frame| Negative { frame, kind: NegativeKind::Hard })
        .collect();
    negatives.extend(
        easy_pool[..n_easy]
            .iter()
            .map(|&frame| Negative { frame, kind: NegativeKind::Easy }),
    );

    Ok(TripletSet { anchor, positives, negatives })
}
