//! Pre-training loop: score hypotheses per chunk, keep the best-scoring
//! subset explanations, and descend the contrastive loss of their heads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::features::FeatureSequence;
use crate::dsp::plp::PlpResult;
use crate::error::{CoreError, Result};
use crate::hypothesis::{sample_triplets, Hypothesis, HypothesisPool, TripletConfig, TripletSet};
use crate::scoring::{score_hypothesis, select_n_wta, ScoreTable, SelectionResult};
use crate::ssl::grad::{grad, LossTerm};
use crate::ssl::params::{Dims, EncoderParams};

/// Everything the trainer needs for one audio chunk.
#[derive(Debug, Clone)]
pub struct TrainChunk {
    pub id: String,
    /// Features the hypothesis scores are computed on.
    pub score_feat: FeatureSequence,
    /// Features the encoder consumes; same frame clock as `score_feat`.
    pub encode_feat: FeatureSequence,
    pub plp: PlpResult,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub d_hidden: usize,
    pub d_z: usize,
    pub d_head: usize,
    pub tau: f64,
    /// Heads updated per chunk per step (1 = winner-take-all).
    pub n_winners: usize,
    pub triplet: TripletConfig,
    pub lr: f64,
    pub momentum: f64,
    /// Global gradient-norm cap applied per step; non-positive disables it.
    pub max_grad_norm: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d_hidden: 32,
            d_z: 16,
            d_head: 8,
            tau: 0.1,
            n_winners: 1,
            triplet: TripletConfig::default(),
            lr: 0.01,
            momentum: 0.9,
            max_grad_norm: 5.0,
            steps: 200,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_hidden == 0 || self.d_z == 0 || self.d_head == 0 {
            return Err(CoreError::InvalidArgument("network dims must be positive".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(CoreError::InvalidArgument(format!("tau {} must be positive", self.tau)));
        }
        if self.n_winners == 0 {
            return Err(CoreError::InvalidArgument("n_winners must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(CoreError::InvalidArgument(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::InvalidArgument(format!(
                "momentum {} must be in [0, 1)",
                self.momentum
            )));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(CoreError::InvalidArgument("steps and batch_size must be positive".into()));
        }
        if self.triplet.n_positives == 0 || self.triplet.n_negatives == 0 {
            return Err(CoreError::InvalidArgument(
                "triplet needs at least one positive and one negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.triplet.hard_fraction) {
            return Err(CoreError::InvalidArgument(format!(
                "hard fraction {} outside [0, 1]",
                self.triplet.hard_fraction
            )));
        }
        Ok(())
    }
}

/// Per-step training record.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    /// Chunks skipped this step because no hypothesis was samplable.
    pub skipped: usize,
    /// How often each head won selection this step.
    pub winner_counts: Vec<usize>,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let n_heads = self.records.first().map_or(0, |r| r.winner_counts.len());
        let mut out = String::from("step,loss,skipped");
        for k in 0..n_heads {
            out.push_str(&format!(",win_{k:02}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{:.9},{}", r.step, r.loss, r.skipped));
            for c in &r.winner_counts {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Trained parameters plus the bookkeeping accumulated along the way.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub log: TrainLog,
    pub score_table: ScoreTable,
}

/// Scoring outcome for one chunk within one step.
pub struct ChunkStep {
    pub raw_scores: Vec<f64>,
    pub selection: SelectionResult,
    pub terms: Vec<LossTerm>,
}

/// Draw fresh triplets for every hypothesis, score them, fold the raw scores
/// into the running means, and keep the `n_winners` lowest-mean hypotheses.
///
/// Returns `None` when no hypothesis admits a triplet draw on this chunk.
pub fn score_and_select(
    chunk: &TrainChunk,
    pool: &HypothesisPool,
    table: &mut ScoreTable,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<ChunkStep>> {
    let t_len = chunk.score_feat.num_frames();
    if chunk.encode_feat.num_frames() != t_len {
        return Err(CoreError::Shape(format!(
            "chunk {}: score features have {t_len} frames, encode features {}",
            chunk.id,
            chunk.encode_feat.num_frames()
        )));
    }

    let mut raw = vec![f64::INFINITY; pool.len()];
    let mut trips: Vec<Option<TripletSet>> = vec![None; pool.len()];
    for (k, &hyp) in pool.hypotheses().iter().enumerate() {
        match sample_triplets(&chunk.plp, t_len, hyp, &cfg.triplet, rng) {
            Ok(trip) => {
                let score = score_hypothesis(&chunk.score_feat, &trip, cfg.tau)?;
                raw[k] = score.value;
                trips[k] = Some(trip);
            }
            Err(CoreError::Unsamplable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if trips.iter().all(Option::is_none) {
        return Ok(None);
    }

    table.update(&chunk.id, &raw)?;
    let means = table.chunk(&chunk.id).expect("chunk just updated").means();
    let selection = select_n_wta(&means, cfg.n_winners)?;

    let terms: Vec<LossTerm> = selection
        .winners
        .iter()
        .filter_map(|&k| {
            trips[k].clone().map(|triplet| LossTerm { head: Some(k), triplet })
        })
        .collect();
    Ok(Some(ChunkStep { raw_scores: raw, selection, terms }))
}

/// One SGD-with-momentum update from a summed batch gradient, with optional
/// global norm clipping.
fn sgd_step(
    params: &mut EncoderParams,
    velocity: &mut EncoderParams,
    mut grad_sum: EncoderParams,
    used: usize,
    cfg: &TrainConfig,
) {
    if used == 0 {
        return;
    }
    grad_sum.scale(1.0 / used as f64);
    if cfg.max_grad_norm > 0.0 {
        let norm = grad_sum.l2_norm();
        if norm > cfg.max_grad_norm {
            grad_sum.scale(cfg.max_grad_norm / norm);
        }
    }
    velocity.scale(cfg.momentum);
    velocity.add_scaled(&grad_sum, 1.0);
    params.add_scaled(velocity, -cfg.lr);
}

/// Knowledge-driven pre-training over a chunk corpus.
pub fn train(corpus: &[TrainChunk], pool: &HypothesisPool, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(CoreError::InvalidArgument("training corpus is empty".into()));
    }
    let d_in = corpus[0].encode_feat.dim();
    for c in corpus {
        if c.encode_feat.dim() != d_in {
            return Err(CoreError::Shape(format!(
                "chunk {} has {} encode dims, expected {d_in}",
                c.id,
                c.encode_feat.dim()
            )));
        }
    }

    let dims = Dims {
        d_in,
        d_hidden: cfg.d_hidden,
        d_z: cfg.d_z,
        d_head: cfg.d_head,
        n_heads: pool.len(),
    };
    let mut params = EncoderParams::init(dims, cfg.seed);
    let mut velocity = EncoderParams::zeros(dims);
    let mut table = ScoreTable::new();
    // Separate stream from the init so changing dims keeps sampling stable.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));

    let mut order: Vec<usize> = Vec::new();
    let mut log = TrainLog::default();

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().expect("order refilled above"));
        }

        let mut grad_sum = EncoderParams::zeros(dims);
        let mut loss_sum = 0.0;
        let mut used = 0usize;
        let mut skipped = 0usize;
        let mut winner_counts = vec![0usize; pool.len()];

        for &ci in &batch {
            let chunk = &corpus[ci];
            match score_and_select(chunk, pool, &mut table, cfg, &mut rng)? {
                Some(cs) => {
                    for &w in &cs.selection.winners {
                        winner_counts[w] += 1;
                    }
                    if cs.terms.is_empty() {
                        skipped += 1;
                        continue;
                    }
                    let (loss, g) = grad(&params, &chunk.encode_feat, &cs.terms, cfg.tau)?;
                    loss_sum += loss;
                    grad_sum.add_scaled(&g, 1.0);
                    used += 1;
                }
                None => skipped += 1,
            }
        }

        let mean_loss = if used > 0 { loss_sum / used as f64 } else { 0.0 };
        sgd_step(&mut params, &mut velocity, grad_sum, used, cfg);
        log.records.push(StepRecord { step, loss: mean_loss, skipped, winner_counts });
    }

    Ok(TrainOutcome { params, log, score_table: table })
}

/// A chunk paired with estimated beats for self-training.
#[derive(Debug, Clone)]
pub struct SelfTrainChunk {
    pub id: String,
    pub encode_feat: FeatureSequence,
    /// Beat estimates expressed as peak frames (all of them are positives).
    pub pseudo_beats: PlpResult,
}

/// Fine-tune the encoder on pseudo labels; the contrastive loss acts on the
/// shared representation directly, so projection heads are never touched.
pub fn self_train(
    corpus: &[SelfTrainChunk],
    params: &mut EncoderParams,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(CoreError::InvalidArgument("self-training corpus is empty".into()));
    }
    for c in corpus {
        if c.encode_feat.dim() != params.dims.d_in {
            return Err(CoreError::Shape(format!(
                "chunk {} has {} encode dims, encoder expects {}",
                c.id,
                c.encode_feat.dim(),
                params.dims.d_in
            )));
        }
    }
    let full = Hypothesis { omega: 1, phi: 0 };
    let dims = params.dims;
    let mut velocity = EncoderParams::zeros(dims);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x517c_c1b7));
    let mut order: Vec<usize> = Vec::new();
    let mut log = TrainLog::default();

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                order.shuffle(&mut rng);
            }
            batch.push(order.pop().expect("order refilled above"));
        }

        let mut grad_sum = EncoderParams::zeros(dims);
        let mut loss_sum = 0.0;
        let mut used = 0usize;
        let mut skipped = 0usize;

        for &ci in &batch {
            let chunk = &corpus[ci];
            let t_len = chunk.encode_feat.num_frames();
            let trip = match sample_triplets(&chunk.pseudo_beats, t_len, full, &cfg.triplet, &mut rng)
            {
                Ok(t) => t,
                Err(CoreError::Unsamplable { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let terms = vec![LossTerm { head: None, triplet: trip }];
            let (loss, g) = grad(params, &chunk.encode_feat, &terms, cfg.tau)?;
            loss_sum += loss;
            grad_sum.add_scaled(&g, 1.0);
            used += 1;
        }

        let mean_loss = if used > 0 { loss_sum / used as f64 } else { 0.0 };
        sgd_step(params, &mut velocity, grad_sum, used, cfg);
        log.records.push(StepRecord {
            step,
            loss: mean_loss,
            skipped,
            winner_counts: vec![0; dims.n_heads],
        });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::features::{FeatureKind, FeatureSequence};
    use crate::hypothesis::build_pool;
    use ndarray::Array2;
    use rand::Rng;

    fn synth_chunk(id: &str, seed: u64) -> TrainChunk {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t_len = 200;
        let d = 8;
        let peaks: Vec<usize> = (0..20).map(|i| 5 + i * 10).collect();
        let mut frames = Array2::from_shape_fn((t_len, d), |_| rng.gen_range(-0.05..0.05));
        // Every second peak carries the pattern: the (2, 0) hypothesis fits.
        for (pi, &p) in peaks.iter().enumerate() {
            if pi % 2 == 1 {
                for j in 0..d {
                    frames[[p, j]] += if j % 2 == 0 { 1.0 } else { -1.0 };
                }
            }
        }
        let feat = FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).unwrap();
        TrainChunk {
            id: id.to_string(),
            score_feat: feat.clone(),
            encode_feat: feat,
            plp: PlpResult::from_peaks(&peaks, t_len).unwrap(),
        }
    }

    #[test]
    fn score_and_select_prefers_planted_subset() {
        let pool = build_pool(&[1, 2, 3, 4]).unwrap();
        let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
        let mut table = ScoreTable::new();
        let chunk = synth_chunk("c0", 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // A few epochs of running means stabilise the winner.
        let mut last = None;
        for _ in 0..8 {
            last = score_and_select(&chunk, &pool, &mut table, &cfg, &mut rng).unwrap();
        }
        let cs = last.expect("chunk has plenty of peaks");
        let want = pool.index_of(Hypothesis { omega: 2, phi: 0 }).unwrap();
        assert_eq!(cs.selection.winners, vec![want]);
        assert_eq!(cs.terms.len(), 1);
        assert_eq!(cs.terms[0].head, Some(want));
    }

    #[test]
    fn train_is_deterministic_and_logs_every_step() {
        let pool = build_pool(&[1, 2]).unwrap();
        let corpus: Vec<TrainChunk> = (0..3).map(|i| synth_chunk(&format!("c{i}"), i as u64)).collect();
        let cfg = TrainConfig {
            steps: 5,
            batch_size: 2,
            d_hidden: 8,
            d_z: 6,
            d_head: 4,
            seed: 42,
            ..TrainConfig::default()
        };
        let a = train(&corpus, &pool, &cfg).unwrap();
        let b = train(&corpus, &pool, &cfg).unwrap();
        assert_eq!(a.log.records.len(), 5);
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        let csv = a.log.to_csv();
        assert!(csv.starts_with("step,loss,skipped,win_00"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn train_moves_parameters_and_reduces_loss() {
        let pool = build_pool(&[1, 2]).unwrap();
        let corpus: Vec<TrainChunk> = (0..4).map(|i| synth_chunk(&format!("c{i}"), 10 + i as u64)).collect();
        let cfg = TrainConfig {
            steps: 60,
            batch_size: 4,
            d_hidden: 8,
            d_z: 6,
            d_head: 4,
            lr: 0.002,
            seed: 7,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &pool, &cfg).unwrap();
        let first: f64 = out.log.records[..10].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        let last: f64 = out.log.records[50..].iter().map(|r| r.loss).sum::<f64>() / 10.0;
        assert!(last < first, "loss did not improve: {first} -> {last}");
        let init = EncoderParams::init(out.params.dims, cfg.seed);
        assert_ne!(init.to_flat(), out.params.to_flat());
    }

    #[test]
    fn self_train_keeps_heads_frozen() {
        let chunk = synth_chunk("c", 1);
        let corpus = vec![SelfTrainChunk {
            id: chunk.id.clone(),
            encode_feat: chunk.encode_feat.clone(),
            pseudo_beats: chunk.plp.clone(),
        }];
        let dims = Dims { d_in: 8, d_hidden: 8, d_z: 6, d_head: 4, n_heads: 10 };
        let mut params = EncoderParams::init(dims, 9);
        let heads_before: Vec<f64> = params
            .heads
            .iter()
            .flat_map(|h| h.a.iter().chain(h.c.iter()).copied().collect::<Vec<_>>())
            .collect();
        let w1_before = params.w1.clone();
        let cfg = TrainConfig { steps: 4, batch_size: 1, seed: 3, ..TrainConfig::default() };
        let log = self_train(&corpus, &mut params, &cfg).unwrap();
        assert_eq!(log.records.len(), 4);
        let heads_after: Vec<f64> = params
            .heads
            .iter()
            .flat_map(|h| h.a.iter().chain(h.c.iter()).copied().collect::<Vec<_>>())
            .collect();
        assert_eq!(heads_before, heads_after);
        assert_ne!(w1_before, params.w1);
    }

    #[test]
    fn self_train_skips_sparse_chunks() {
        let feat = FeatureSequence::new(Array2::zeros((50, 4)), 0.02, FeatureKind::Synthetic).unwrap();
        let corpus = vec![SelfTrainChunk {
            id: "sparse".into(),
            encode_feat: feat,
            // Three pseudo beats cannot cover anchor + 4 positives.
            pseudo_beats: PlpResult::from_peaks(&[10, 20, 30], 50).unwrap(),
        }];
        let dims = Dims { d_in: 4, d_hidden: 4, d_z: 4, d_head: 2, n_heads: 1 };
        let mut params = EncoderParams::init(dims, 0);
        let before = params.to_flat();
        let cfg = TrainConfig { steps: 2, batch_size: 1, ..TrainConfig::default() };
        let log = self_train(&corpus, &mut params, &cfg).unwrap();
        assert!(log.records.iter().all(|r| r.skipped == 1));
        assert_eq!(before, params.to_flat());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.tau = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.momentum = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.n_winners = 0;
        assert!(cfg.validate().is_err());
    }
}
