//! Synthetic rhythm corpora with planted ground truth, plus two reproducible
//! desk-scale studies built on them: hypothesis-selection accuracy over a
//! noise grid, and a pre-training comparison (winner-take-all variants vs.
//! self-training vs. an untrained encoder) judged by a linear probe.
//!
//! Chunks are built on a tatum grid: `tempo_bpm` beats per minute, each beat
//! split into `omega` tatums, so the planted hypothesis `(omega, phi)` picks
//! the true beats back out of the tatum peaks. Feature-template chunks put a
//! shared vector (plus noise) on beat frames; rendered chunks put louder
//! clicks on beats and softer clicks on the remaining tatums.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dsp::features::{FeatureKind, FeatureSequence};
use crate::dsp::plp::PlpResult;
use crate::dsp::{num_frames, time_to_frame, HOP_S};
use crate::error::{CoreError, Result};
use crate::hypothesis::{subset_indices, Hypothesis, HypothesisPool, TripletConfig};
use crate::ingest::{AudioChunk, TARGET_SAMPLE_RATE};
use crate::scoring::{rank_hypotheses, score_hypothesis, selection_accuracy, AccuracyMode, ScoreTable};
use crate::ssl::network::encode;
use crate::ssl::params::{Dims, EncoderParams};
use crate::ssl::probe::{fit as fit_probe, frame_f1, ProbeConfig};
use crate::ssl::train::{self_train, train, SelfTrainChunk, TrainChunk, TrainConfig};

/// One generated chunk with its planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticChunk {
    pub planted: Hypothesis,
    pub tempo_bpm: f64,
    pub tatum_period_s: f64,
    /// Frame indices of every tatum event.
    pub tatum_frames: Vec<usize>,
    /// Frame indices of the true beats (the planted subset of the tatums).
    pub beat_frames: Vec<usize>,
    /// The tatum grid expressed as a pulse result for hypothesis machinery.
    pub plp: PlpResult,
    /// Template-on-beat features; beat frames carry the template + noise.
    pub features: FeatureSequence,
    pub audio: Option<AudioChunk>,
}

#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub duration_s: f64,
    pub feature_dim: usize,
    pub render_audio: bool,
    /// Click amplitude on beats vs. remaining tatums.
    pub beat_gain: f64,
    pub tatum_gain: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            duration_s: 12.0,
            feature_dim: 16,
            render_audio: false,
            beat_gain: 1.0,
            tatum_gain: 0.35,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Place a grid of event times on the frame clock; events start after half a
/// second so early analysis frames exist, and stop short of the chunk end.
fn grid_frames(
    start_s: f64,
    period_s: f64,
    duration_s: f64,
    t_len: usize,
) -> Result<Vec<usize>> {
    let mut frames = Vec::new();
    let mut t = start_s;
    while t < duration_s - 0.1 {
        frames.push(time_to_frame(t, TARGET_SAMPLE_RATE, t_len));
        t += period_s;
    }
    for w in frames.windows(2) {
        if w[1] < w[0] + 3 {
            return Err(CoreError::InvalidArgument(format!(
                "tatum period {period_s:.4}s too short for the frame grid"
            )));
        }
    }
    if frames.len() < 3 {
        return Err(CoreError::InvalidArgument(format!(
            "duration {duration_s}s holds only {} tatums",
            frames.len()
        )));
    }
    Ok(frames)
}

/// Render a decaying 1 kHz click of the given amplitude into `samples`.
fn add_click(samples: &mut [f32], at_s: f64, amp: f64) {
    let sr = TARGET_SAMPLE_RATE as f64;
    let start = (at_s * sr).round() as usize;
    let len = (0.03 * sr) as usize;
    let decay = 0.004 * sr;
    for i in 0..len {
        let idx = start + i;
        if idx >= samples.len() {
            break;
        }
        let phase = 2.0 * std::f64::consts::PI * 1000.0 * i as f64 / sr;
        samples[idx] += (amp * phase.sin() * (-(i as f64) / decay).exp()) as f32;
    }
}

/// Generate one chunk with the hypothesis `(omega, phi)` planted as truth.
///
/// `noise_sigma` is the standard deviation added to the shared template on
/// beat frames; all other frames are independent unit-variance noise.
pub fn gen_chunk(
    h: Hypothesis,
    tempo_bpm: f64,
    noise_sigma: f64,
    seed: u64,
    cfg: &GenConfig,
) -> Result<SyntheticChunk> {
    if !(30.0..=300.0).contains(&tempo_bpm) {
        return Err(CoreError::InvalidArgument(format!(
            "tempo {tempo_bpm} BPM outside [30, 300]"
        )));
    }
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(CoreError::InvalidArgument(format!("bad noise sigma {noise_sigma}")));
    }
    if cfg.feature_dim == 0 {
        return Err(CoreError::InvalidArgument("feature dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_samples = (cfg.duration_s * TARGET_SAMPLE_RATE as f64).round() as usize;
    let t_len = num_frames(n_samples);
    if t_len == 0 {
        return Err(CoreError::InvalidArgument(format!("duration {}s too short", cfg.duration_s)));
    }

    let tatum_period_s = 60.0 / (tempo_bpm * h.omega as f64);
    // Random phase inside one period keeps grids from all aligning.
    let start_s = 0.5 + rng.gen_range(0.0..tatum_period_s);
    let tatum_frames = grid_frames(start_s, tatum_period_s, cfg.duration_s, t_len)?;
    let beat_frames: Vec<usize> = subset_indices(tatum_frames.len(), h)
        .into_iter()
        .map(|i| tatum_frames[i])
        .collect();
    let plp = PlpResult::from_peaks(&tatum_frames, t_len)?;

    let template: Vec<f64> = (0..cfg.feature_dim).map(|_| normal(&mut rng)).collect();
    let mut frames = Array2::from_shape_fn((t_len, cfg.feature_dim), |_| normal(&mut rng));
    for &b in &beat_frames {
        for j in 0..cfg.feature_dim {
            frames[[b, j]] = template[j] + noise_sigma * normal(&mut rng);
        }
    }
    let features = FeatureSequence::new(frames, HOP_S, FeatureKind::Synthetic)?;

    let audio = if cfg.render_audio {
        let mut samples = vec![0.0f32; n_samples];
        for (i, &f) in tatum_frames.iter().enumerate() {
            let is_beat = beat_frames.binary_search(&f).is_ok();
            let at = start_s + i as f64 * tatum_period_s;
            add_click(&mut samples, at, if is_beat { cfg.beat_gain } else { cfg.tatum_gain });
        }
        Some(AudioChunk {
            samples,
            sample_rate: TARGET_SAMPLE_RATE,
            source_id: format!("synth-{seed:08x}"),
            offset_s: 0.0,
        })
    } else {
        None
    };

    Ok(SyntheticChunk {
        planted: h,
        tempo_bpm,
        tatum_period_s,
        tatum_frames,
        beat_frames,
        plp,
        features,
        audio,
    })
}

/// Render a click track whose inter-click interval jumps by `jump_frac`
/// halfway through — built to violate interval-stability filters.
pub fn gen_tempo_jump_audio(
    tempo_bpm: f64,
    jump_frac: f64,
    duration_s: f64,
    seed: u64,
) -> Result<AudioChunk> {
    if !(30.0..=300.0).contains(&tempo_bpm) {
        return Err(CoreError::InvalidArgument(format!(
            "tempo {tempo_bpm} BPM outside [30, 300]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_samples = (duration_s * TARGET_SAMPLE_RATE as f64).round() as usize;
    let mut samples = vec![0.0f32; n_samples];
    let p1 = 60.0 / tempo_bpm;
    let p2 = p1 * (1.0 + jump_frac);
    let mut t = 0.5 + rng.gen_range(0.0..p1);
    while t < duration_s - 0.1 {
        add_click(&mut samples, t, 1.0);
        t += if t < duration_s * 0.5 { p1 } else { p2 };
    }
    Ok(AudioChunk {
        samples,
        sample_rate: TARGET_SAMPLE_RATE,
        source_id: format!("jump-{seed:08x}"),
        offset_s: 0.0,
    })
}

/// Where the scored features come from in the selection study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    /// The template-on-beat construction straight from [`gen_chunk`].
    Template,
    /// Features extracted from rendered click audio.
    Audio(FeatureKind),
}

impl std::fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureSource::Template => write!(f, "template"),
            FeatureSource::Audio(kind) => write!(f, "audio-{}", kind.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SelectionStudyConfig {
    pub source: FeatureSource,
    /// Top-k values reported, typically `[1, 2, 3]`.
    pub ks: Vec<usize>,
    /// Template-noise grid; for audio sources this scales additive sample noise.
    pub sigmas: Vec<f64>,
    pub chunks_per_cell: usize,
    /// Scoring epochs folded into the running mean before ranking.
    pub score_epochs: usize,
    pub tau: f64,
    pub triplet: TripletConfig,
    pub tempo_lo: f64,
    pub tempo_hi: f64,
    pub duration_s: f64,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SelectionStudyConfig {
    fn default() -> Self {
        SelectionStudyConfig {
            source: FeatureSource::Template,
            ks: vec![1, 2, 3],
            sigmas: vec![0.0, 0.1, 0.3, 1.0, 3.0],
            chunks_per_cell: 200,
            score_epochs: 8,
            tau: 0.1,
            triplet: TripletConfig::default(),
            tempo_lo: 80.0,
            tempo_hi: 160.0,
            duration_s: 12.0,
            feature_dim: 16,
            seed: 0,
        }
    }
}

/// Accuracy of one `(sigma, k)` cell, as fractions in [0, 1].
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SelectionCell {
    pub sigma: f64,
    pub k: usize,
    pub exact: f64,
    pub octave: f64,
    pub metric_level: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SelectionTable {
    pub source: String,
    pub chunks_per_cell: usize,
    pub cells: Vec<SelectionCell>,
}

impl SelectionTable {
    pub fn cell(&self, sigma: f64, k: usize) -> Option<&SelectionCell> {
        self.cells.iter().find(|c| c.sigma == sigma && c.k == k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,sigma,k,exact,octave,metric_level,chunks\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{}\n",
                self.source, c.sigma, c.k, c.exact, c.octave, c.metric_level, self.chunks_per_cell
            ));
        }
        out
    }

    /// Aligned table with one row per noise level and per-k column groups.
    pub fn to_text(&self) -> String {
        let ks: Vec<usize> = {
            let mut ks: Vec<usize> = self.cells.iter().map(|c| c.k).collect();
            ks.sort_unstable();
            ks.dedup();
            ks
        };
        let sigmas: Vec<f64> = {
            let mut s: Vec<f64> = self.cells.iter().map(|c| c.sigma).collect();
            s.dedup();
            s
        };
        let mut out = format!(
            "selection accuracy (%) — source: {}, {} chunks/cell\n",
            self.source, self.chunks_per_cell
        );
        out.push_str(&format!("{:>8}", "sigma"));
        for &k in &ks {
            out.push_str(&format!(
                "  {:>8} {:>8} {:>8}",
                format!("k={k} Ex"),
                "Oct",
                "MetLvl"
            ));
        }
        out.push('\n');
        for &sigma in &sigmas {
            out.push_str(&format!("{sigma:>8.2}"));
            for &k in &ks {
                if let Some(c) = self.cell(sigma, k) {
                    out.push_str(&format!(
                        "  {:>8.1} {:>8.1} {:>8.1}",
                        100.0 * c.exact,
                        100.0 * c.octave,
                        100.0 * c.metric_level
                    ));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Accuracy tallies for one chunk: `[exact, octave, metric-level]` per k.
fn study_chunk(cfg: &SelectionStudyConfig, pool: &HypothesisPool, sigma: f64, seed: u64) -> Result<Vec<[bool; 3]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = pool.hypotheses()[rng.gen_range(0..pool.len())];
    let tempo = rng.gen_range(cfg.tempo_lo..=cfg.tempo_hi);
    let gen = GenConfig {
        duration_s: cfg.duration_s,
        feature_dim: cfg.feature_dim,
        render_audio: matches!(cfg.source, FeatureSource::Audio(_)),
        ..GenConfig::default()
    };
    let template_sigma = match cfg.source {
        FeatureSource::Template => sigma,
        FeatureSource::Audio(_) => 0.0,
    };
    let chunk = gen_chunk(planted, tempo, template_sigma, rng.gen(), &gen)?;

    let feat = match cfg.source {
        FeatureSource::Template => chunk.features.clone(),
        FeatureSource::Audio(kind) => {
            let mut audio = chunk.audio.clone().expect("rendered above");
            if sigma > 0.0 {
                // Noise at sigma * 5% of the click amplitude scale.
                let std = 0.05 * sigma;
                for s in &mut audio.samples {
                    *s += (std * normal(&mut rng)) as f32;
                }
            }
            crate::dsp::extract(&audio, kind)?
        }
    };

    let t_len = feat.num_frames();
    let mut table = ScoreTable::new();
    for _ in 0..cfg.score_epochs {
        let mut raw = vec![f64::INFINITY; pool.len()];
        for (i, &hyp) in pool.hypotheses().iter().enumerate() {
            match crate::hypothesis::sample_triplets(&chunk.plp, t_len, hyp, &cfg.triplet, &mut rng)
            {
                Ok(trip) => raw[i] = score_hypothesis(&feat, &trip, cfg.tau)?.value,
                Err(CoreError::Unsamplable { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        table.update("chunk", &raw)?;
    }
    let means = table.chunk("chunk").expect("updated above").means();
    let ranked = rank_hypotheses(pool, means)?;

    cfg.ks
        .iter()
        .map(|&k| {
            Ok([
                selection_accuracy(&ranked, chunk.planted, k, AccuracyMode::Exact)?,
                selection_accuracy(&ranked, chunk.planted, k, AccuracyMode::Octave)?,
                selection_accuracy(&ranked, chunk.planted, k, AccuracyMode::MetricLevel)?,
            ])
        })
        .collect()
}

/// Selection-mechanism accuracy over a noise grid, one cell per `(sigma, k)`.
pub fn run_selection_study(cfg: &SelectionStudyConfig, pool: &HypothesisPool) -> Result<SelectionTable> {
    if cfg.chunks_per_cell == 0 || cfg.ks.is_empty() || cfg.sigmas.is_empty() {
        return Err(CoreError::InvalidArgument("empty selection study grid".into()));
    }
    if cfg.ks.iter().any(|&k| k == 0 || k > pool.len()) {
        return Err(CoreError::InvalidArgument("top-k out of range for the pool".into()));
    }
    let mut cells = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        // Per-chunk seeds are derived, so parallel order cannot matter.
        let per_chunk: Vec<Vec<[bool; 3]>> = (0..cfg.chunks_per_cell)
            .into_par_iter()
            .map(|ci| {
                let seed = cfg
                    .seed
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add((si as u64) << 32)
                    .wrapping_add(ci as u64 + 1);
                study_chunk(cfg, pool, sigma, seed)
            })
            .collect::<Result<_>>()?;
        for (ki, &k) in cfg.ks.iter().enumerate() {
            let mut hits = [0usize; 3];
            for chunk_flags in &per_chunk {
                for (slot, &hit) in chunk_flags[ki].iter().enumerate() {
                    if hit {
                        hits[slot] += 1;
                    }
                }
            }
            let n = cfg.chunks_per_cell as f64;
            cells.push(SelectionCell {
                sigma,
                k,
                exact: hits[0] as f64 / n,
                octave: hits[1] as f64 / n,
                metric_level: hits[2] as f64 / n,
            });
        }
    }
    Ok(SelectionTable {
        source: cfg.source.to_string(),
        chunks_per_cell: cfg.chunks_per_cell,
        cells,
    })
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                out[t] = avg;
            }
            i = j + 1;
        }
        out
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone)]
pub struct PretrainStudyConfig {
    pub n_chunks: usize,
    pub duration_s: f64,
    pub feature_dim: usize,
    /// Template noise on the scored features.
    pub score_sigma: f64,
    /// Noise around the sign-flipped global template on encoded features.
    pub encode_sigma: f64,
    pub tempo_lo: f64,
    pub tempo_hi: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for PretrainStudyConfig {
    fn default() -> Self {
        PretrainStudyConfig {
            n_chunks: 32,
            duration_s: 12.0,
            feature_dim: 16,
            score_sigma: 0.1,
            encode_sigma: 0.3,
            tempo_lo: 80.0,
            tempo_hi: 160.0,
            steps: 240,
            batch_size: 8,
            lr: 0.01,
            tau: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainRun {
    pub name: String,
    pub probe_f1: f64,
    /// Mean training loss over the last tenth of the steps (0 for untrained).
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainReport {
    pub runs: Vec<PretrainRun>,
}

impl PretrainReport {
    pub fn get(&self, name: &str) -> Option<&PretrainRun> {
        self.runs.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,probe_f1,final_loss\n");
        for r in &self.runs {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.name, r.probe_f1, r.final_loss));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("pre-training comparison (linear-probe beat-frame F1)\n");
        for r in &self.runs {
            out.push_str(&format!("{:>10}  F1 {:.3}  loss {:>8.3}\n", r.name, r.probe_f1, r.final_loss));
        }
        out
    }
}

struct PretrainChunk {
    train: TrainChunk,
    beat_labels: Vec<bool>,
    pseudo: PlpResult,
}

/// Corpus where the scored features identify the beat subset cleanly, while
/// the encoded features carry the beat template with a random sign per beat
/// frame. An untrained (odd at init) encoder maps the two signs to opposite
/// points, so a linear probe can barely beat chance; contrastive training
/// must learn a sign-invariant representation to pull beat frames together.
fn build_pretrain_corpus(cfg: &PretrainStudyConfig, pool: &HypothesisPool) -> Result<Vec<PretrainChunk>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xc0ffee));
    let global_template: Vec<f64> =
        (0..cfg.feature_dim).map(|_| 2.0 * normal(&mut rng)).collect();
    let gen = GenConfig {
        duration_s: cfg.duration_s,
        feature_dim: cfg.feature_dim,
        render_audio: false,
        ..GenConfig::default()
    };
    let mut corpus = Vec::with_capacity(cfg.n_chunks);
    for ci in 0..cfg.n_chunks {
        let planted = pool.hypotheses()[rng.gen_range(0..pool.len())];
        let tempo = rng.gen_range(cfg.tempo_lo..=cfg.tempo_hi);
        let chunk = gen_chunk(planted, tempo, cfg.score_sigma, rng.gen(), &gen)?;

        let t_len = chunk.features.num_frames();
        let mut frames = Array2::from_shape_fn((t_len, cfg.feature_dim), |_| normal(&mut rng));
        for &b in &chunk.beat_frames {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            for j in 0..cfg.feature_dim {
                frames[[b, j]] = sign * global_template[j] + cfg.encode_sigma * normal(&mut rng);
            }
        }
        let encode_feat = FeatureSequence::new(frames, HOP_S, FeatureKind::Synthetic)?;

        let mut beat_labels = vec![false; t_len];
        for &b in &chunk.beat_frames {
            beat_labels[b] = true;
        }
        let pseudo = PlpResult::from_peaks(&chunk.beat_frames, t_len)?;
        corpus.push(PretrainChunk {
            train: TrainChunk {
                id: format!("pc{ci}"),
                score_feat: chunk.features,
                encode_feat,
                plp: chunk.plp,
            },
            beat_labels,
            pseudo,
        });
    }
    Ok(corpus)
}

/// Frame-level F1 of a class-weighted linear probe on frozen representations.
fn probe_f1(params: &EncoderParams, corpus: &[PretrainChunk]) -> Result<f64> {
    let total: usize = corpus.iter().map(|c| c.beat_labels.len()).sum();
    let mut x = Array2::zeros((total, params.dims.d_z));
    let mut y = Vec::with_capacity(total);
    let mut row = 0;
    for c in corpus {
        let reps = encode(params, &c.train.encode_feat)?;
        for t in 0..c.beat_labels.len() {
            x.row_mut(row).assign(&reps.z.row(t));
            y.push(c.beat_labels[t]);
            row += 1;
        }
    }
    let probe = fit_probe(&x, &y, &ProbeConfig::default())?;
    Ok(frame_f1(&probe.predict(&x), &y))
}

fn tail_mean_loss(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    let tail = (losses.len() / 10).max(1);
    losses[losses.len() - tail..].iter().sum::<f64>() / tail as f64
}

/// Train under each selection width, plus self-training with oracle pseudo
/// beats and the untrained baseline, and probe each resulting encoder.
pub fn run_pretrain_study(cfg: &PretrainStudyConfig, pool: &HypothesisPool) -> Result<PretrainReport> {
    let corpus = build_pretrain_corpus(cfg, pool)?;
    let train_chunks: Vec<TrainChunk> = corpus.iter().map(|c| c.train.clone()).collect();
    let dims = Dims::standard(cfg.feature_dim, pool.len());
    let base = TrainConfig {
        tau: cfg.tau,
        lr: cfg.lr,
        steps: cfg.steps,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        ..TrainConfig::default()
    };

    let mut runs = Vec::new();

    let untrained = EncoderParams::init(dims, cfg.seed);
    runs.push(PretrainRun {
        name: "untrained".into(),
        probe_f1: probe_f1(&untrained, &corpus)?,
        final_loss: 0.0,
    });

    for n_winners in 1..=3usize {
        let cfg_n = TrainConfig { n_winners, ..base.clone() };
        let out = train(&train_chunks, pool, &cfg_n)?;
        let losses: Vec<f64> = out.log.records.iter().map(|r| r.loss).collect();
        runs.push(PretrainRun {
            name: format!("{n_winners}wta"),
            probe_f1: probe_f1(&out.params, &corpus)?,
            final_loss: tail_mean_loss(&losses),
        });
    }

    let self_corpus: Vec<SelfTrainChunk> = corpus
        .iter()
        .map(|c| SelfTrainChunk {
            id: c.train.id.clone(),
            encode_feat: c.train.encode_feat.clone(),
            pseudo_beats: c.pseudo.clone(),
        })
        .collect();
    let mut params = EncoderParams::init(dims, cfg.seed);
    let log = self_train(&self_corpus, &mut params, &base)?;
    let losses: Vec<f64> = log.records.iter().map(|r| r.loss).collect();
    runs.push(PretrainRun {
        name: "selftrain".into(),
        probe_f1: probe_f1(&params, &corpus)?,
        final_loss: tail_mean_loss(&losses),
    });

    Ok(PretrainReport { runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{build_pool, subset};

    fn pool() -> HypothesisPool {
        build_pool(&[1, 2, 3, 4]).unwrap()
    }

    #[test]
    fn planted_beats_are_the_hypothesis_subset() {
        for (omega, phi) in [(1, 0), (2, 1), (3, 0), (4, 3)] {
            let h = Hypothesis { omega, phi };
            let c = gen_chunk(h, 120.0, 0.1, 7, &GenConfig::default()).unwrap();
            assert_eq!(c.beat_frames, subset(&c.plp, h));
            assert_eq!(c.plp.peaks, c.tatum_frames);
        }
    }

    #[test]
    fn omega_one_makes_every_tatum_a_beat() {
        let c = gen_chunk(Hypothesis { omega: 1, phi: 0 }, 100.0, 0.0, 1, &GenConfig::default())
            .unwrap();
        assert_eq!(c.beat_frames, c.tatum_frames);
    }

    #[test]
    fn zero_sigma_repeats_the_template_exactly() {
        let c = gen_chunk(Hypothesis { omega: 2, phi: 0 }, 120.0, 0.0, 3, &GenConfig::default())
            .unwrap();
        let first = c.beat_frames[0];
        for &b in &c.beat_frames[1..] {
            for j in 0..c.features.dim() {
                assert_eq!(c.features.frames[[b, j]], c.features.frames[[first, j]]);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenConfig { render_audio: true, ..GenConfig::default() };
        let a = gen_chunk(Hypothesis { omega: 3, phi: 1 }, 90.0, 0.2, 42, &cfg).unwrap();
        let b = gen_chunk(Hypothesis { omega: 3, phi: 1 }, 90.0, 0.2, 42, &cfg).unwrap();
        assert_eq!(a.features.frames, b.features.frames);
        assert_eq!(a.audio.unwrap().samples, b.audio.unwrap().samples);
    }

    #[test]
    fn rejects_out_of_range_tempo() {
        let h = Hypothesis { omega: 1, phi: 0 };
        assert!(gen_chunk(h, 20.0, 0.0, 0, &GenConfig::default()).is_err());
        assert!(gen_chunk(h, 400.0, 0.0, 0, &GenConfig::default()).is_err());
    }

    #[test]
    fn spearman_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&xs, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&xs, &[8.0, 6.0, 4.0, 2.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman_rho(&xs, &[5.0, 5.0, 5.0, 5.0]), 0.0);
    }

    #[test]
    fn selection_study_small_grid_shapes() {
        let cfg = SelectionStudyConfig {
            sigmas: vec![0.0, 2.0],
            chunks_per_cell: 8,
            score_epochs: 2,
            ..SelectionStudyConfig::default()
        };
        let table = run_selection_study(&cfg, &pool()).unwrap();
        assert_eq!(table.cells.len(), 6);
        for c in &table.cells {
            assert!(c.octave >= c.exact, "octave < exact at sigma {} k {}", c.sigma, c.k);
            assert!(c.metric_level >= c.exact);
            assert!((0.0..=1.0).contains(&c.exact));
        }
        // Monotone in k for fixed sigma and mode.
        for &sigma in &[0.0, 2.0] {
            let e1 = table.cell(sigma, 1).unwrap().exact;
            let e3 = table.cell(sigma, 3).unwrap().exact;
            assert!(e3 >= e1);
        }
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(table.to_text().contains("sigma"));
    }

    #[test]
    fn selection_study_is_deterministic() {
        let cfg = SelectionStudyConfig {
            sigmas: vec![0.5],
            ks: vec![1],
            chunks_per_cell: 6,
            score_epochs: 2,
            seed: 9,
            ..SelectionStudyConfig::default()
        };
        let a = run_selection_study(&cfg, &pool()).unwrap();
        let b = run_selection_study(&cfg, &pool()).unwrap();
        assert_eq!(a.cells[0].exact, b.cells[0].exact);
    }
}
