//! Implementations of the subcommands. Each takes the validated
//! [`PipelineConfig`] plus its own paths/flags and writes the formats owned by
//! the library modules; warnings about degenerate data go to stderr.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use tatum_core::dsp::features::{lag_stack, write_feature_dump, FeatureSequence};
use tatum_core::dsp::{extract, frame_time, plp_from_audio};
use tatum_core::hypothesis::admissible;
use tatum_core::ingest::{
    cut_chunks, load_audio, parse_beats, read_manifest, write_beats, write_manifest, AudioChunk,
    BeatAnnotation, ChunkRecord, TARGET_SAMPLE_RATE,
};
use tatum_core::metrics::evaluate_dirs;
use tatum_core::ssl::train::{score_and_select, self_train, train, SelfTrainChunk, TrainChunk};
use tatum_core::ssl::{load_checkpoint, save_checkpoint, Dims, EncoderParams};
use tatum_core::synthbench::{
    run_pretrain_study, run_selection_study, FeatureSource, PretrainStudyConfig,
    SelectionStudyConfig,
};
use tatum_core::{PlpResult, ScoreTable};

use crate::config::PipelineConfig;

/// A required input path that does not exist. Mapped to exit code 3.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(anyhow::Error::new(MissingInput(path.to_path_buf())))
    }
}

fn require_dir(path: &Path) -> anyhow::Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(anyhow::Error::new(MissingInput(path.to_path_buf())))
    }
}

fn warn(msg: impl fmt::Display) {
    eprintln!("warning: {msg}");
}

/// Relative path from `from_dir` to `to`, both of which must exist.
fn relative_path(from_dir: &Path, to: &Path) -> anyhow::Result<PathBuf> {
    let from = from_dir
        .canonicalize()
        .with_context(|| format!("cannot resolve {}", from_dir.display()))?;
    let to = to
        .canonicalize()
        .with_context(|| format!("cannot resolve {}", to.display()))?;
    let f: Vec<_> = from.components().collect();
    let t: Vec<_> = to.components().collect();
    let common = f.iter().zip(t.iter()).take_while(|(a, b)| a == b).count();
    let mut out = PathBuf::new();
    for _ in common..f.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c.as_os_str());
    }
    Ok(out)
}

/// Stable per-chunk identifier: source stem plus the offset in milliseconds.
fn record_chunk_id(rec: &ChunkRecord) -> String {
    format!("{}-{:08}", rec.source_id, (rec.offset * 1000.0).round() as u64)
}

/// Load the source track behind a manifest record and slice out its chunk.
fn load_chunk_audio(manifest: &Path, rec: &ChunkRecord) -> anyhow::Result<AudioChunk> {
    let dir = manifest.parent().filter(|p| !p.as_os_str().is_empty());
    let path = match dir {
        Some(d) => d.join(&rec.audio),
        None => PathBuf::from(&rec.audio),
    };
    require_file(&path)?;
    let track = load_audio(&path, TARGET_SAMPLE_RATE)?;
    let sr = track.sample_rate as f64;
    let start = (rec.offset * sr).round() as usize;
    let want = (rec.duration * sr).round() as usize;
    let have = track.samples.len().saturating_sub(start);
    if have + 1 < want {
        anyhow::bail!(
            "chunk {} runs past the end of {} ({} samples short)",
            record_chunk_id(rec),
            path.display(),
            want - have
        );
    }
    let len = want.min(have);
    Ok(AudioChunk {
        samples: track.samples[start..start + len].to_vec(),
        sample_rate: track.sample_rate,
        source_id: rec.source_id.clone(),
        offset_s: rec.offset,
    })
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn median_interval_s(peaks: &[usize], sample_rate: u32) -> Option<f64> {
    if peaks.len() < 2 {
        return None;
    }
    let mut gaps: Vec<f64> = peaks
        .windows(2)
        .map(|w| frame_time(w[1], sample_rate) - frame_time(w[0], sample_rate))
        .collect();
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    Some(if gaps.len() % 2 == 1 {
        gaps[mid]
    } else {
        0.5 * (gaps[mid - 1] + gaps[mid])
    })
}

/// `plp <audio> <out>`: pulse curve + peaks as JSON, peak times as `.beats`,
/// and optionally a feature dump of the configured kind.
pub fn cmd_plp(
    cfg: &PipelineConfig,
    audio: &Path,
    out: &Path,
    dump_features: bool,
) -> anyhow::Result<()> {
    require_file(audio)?;
    let chunk = load_audio(audio, TARGET_SAMPLE_RATE)?;
    let plp = plp_from_audio(&chunk, &cfg.plp_config())?;
    let times = plp.peak_times(chunk.sample_rate);

    let report = json!({
        "source_id": chunk.source_id,
        "hop_s": tatum_core::dsp::HOP_S,
        "frames": plp.curve.len(),
        "peaks": plp.peaks,
        "peak_times": times,
        "curve": plp.curve,
    });
    write_text(&out.with_extension("json"), &format!("{report:#}\n"))?;
    write_beats(&out.with_extension("beats"), &BeatAnnotation::from_times(&times))?;

    if dump_features {
        let feat = extract(&chunk, cfg.features)?;
        let mut base = out.as_os_str().to_owned();
        base.push("_features");
        write_feature_dump(&feat, Path::new(&base))?;
    }

    if plp.peaks.len() < 3 {
        warn(format!("only {} pulse peaks found", plp.peaks.len()));
    }
    match median_interval_s(&plp.peaks, chunk.sample_rate) {
        Some(m) => println!(
            "{}: {} pulse peaks over {} frames, median interval {m:.3} s",
            chunk.source_id,
            plp.peaks.len(),
            plp.curve.len()
        ),
        None => println!(
            "{}: {} pulse peaks over {} frames",
            chunk.source_id,
            plp.peaks.len(),
            plp.curve.len()
        ),
    }
    Ok(())
}

/// `mine <audio_dir> <manifest_out>`: cut fixed-length chunks from every WAV
/// under `audio_dir` and keep those whose pulse-peak intervals are steady.
pub fn cmd_mine(cfg: &PipelineConfig, audio_dir: &Path, manifest_out: &Path) -> anyhow::Result<()> {
    require_dir(audio_dir)?;
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(audio_dir)
        .with_context(|| format!("cannot list {}", audio_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "wav"))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        warn(format!("no .wav files under {}", audio_dir.display()));
    }

    if let Some(dir) = manifest_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let manifest_dir = manifest_out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let plp_cfg = cfg.plp_config();
    let mut records = Vec::new();
    let mut kept = 0usize;
    let mut rejected = 0usize;
    for wav in &wavs {
        let track = load_audio(wav, TARGET_SAMPLE_RATE)?;
        let chunks = cut_chunks(&track, cfg.chunk_s, cfg.max_chunks_per_track);
        if chunks.is_empty() {
            warn(format!(
                "{}: shorter than one {}-second chunk, skipped",
                track.source_id, cfg.chunk_s
            ));
            continue;
        }
        let rel = relative_path(&manifest_dir, wav)?;
        let mut track_kept = 0usize;
        for chunk in &chunks {
            let plp = plp_from_audio(chunk, &plp_cfg)?;
            if admissible(&plp, cfg.max_rel_var) {
                records.push(ChunkRecord {
                    source_id: chunk.source_id.clone(),
                    offset: chunk.offset_s,
                    duration: chunk.duration_s(),
                    audio: rel.to_string_lossy().into_owned(),
                });
                kept += 1;
                track_kept += 1;
            } else {
                rejected += 1;
            }
        }
        if track_kept == 0 {
            warn(format!("{}: no chunk has a steady pulse", track.source_id));
        }
    }

    write_manifest(manifest_out, &records)?;
    println!(
        "mined {kept} chunks from {} tracks ({rejected} rejected) -> {}",
        wavs.len(),
        manifest_out.display()
    );
    Ok(())
}

/// Shared loader for `score` and `train`: audio, features, pulse per record.
fn load_train_chunks(
    cfg: &PipelineConfig,
    manifest: &Path,
    with_lags: bool,
) -> anyhow::Result<Vec<TrainChunk>> {
    require_file(manifest)?;
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        anyhow::bail!("manifest {} has no chunks", manifest.display());
    }
    let plp_cfg = cfg.plp_config();
    let mut chunks = Vec::with_capacity(records.len());
    for rec in &records {
        let audio = load_chunk_audio(manifest, rec)?;
        let feat = extract(&audio, cfg.features)?;
        let plp = plp_from_audio(&audio, &plp_cfg)?;
        let encode_feat = if with_lags {
            lag_stack(&feat, &cfg.lags)
        } else {
            feat.clone()
        };
        chunks.push(TrainChunk {
            id: record_chunk_id(rec),
            score_feat: feat,
            encode_feat,
            plp,
        });
    }
    Ok(chunks)
}

/// `score <manifest>`: score every hypothesis on every chunk for
/// `score_epochs` rounds and export JSON-lines audit records.
pub fn cmd_score(cfg: &PipelineConfig, manifest: &Path, out: &Path) -> anyhow::Result<()> {
    let chunks = load_train_chunks(cfg, manifest, false)?;
    let pool = cfg.pool()?;
    let tc = cfg.train_config();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = ScoreTable::new();
    let mut lines = String::new();
    let mut audited = 0usize;
    let mut unsamplable: Vec<String> = Vec::new();

    for epoch in 0..cfg.score_epochs {
        for chunk in &chunks {
            match score_and_select(chunk, &pool, &mut table, &tc, &mut rng)? {
                Some(step) => {
                    let line = json!({
                        "source_id": chunk.id,
                        "epoch": epoch,
                        "scores": step.raw_scores,
                        "winners": step.selection.winners,
                    });
                    lines.push_str(&line.to_string());
                    lines.push('\n');
                    audited += 1;
                }
                None => {
                    if epoch == 0 {
                        unsamplable.push(chunk.id.clone());
                    }
                }
            }
        }
    }
    for id in &unsamplable {
        warn(format!("{id}: no hypothesis can be sampled, chunk skipped"));
    }

    write_text(out, &lines)?;
    println!(
        "scored {} chunks x {} epochs ({} selection, tau {}) -> {} ({audited} lines)",
        chunks.len(),
        cfg.score_epochs,
        cfg.select.as_str(),
        cfg.tau,
        out.display()
    );
    Ok(())
}

/// `train <manifest>`: knowledge-driven pre-training; writes a checkpoint
/// (JSON header + f64 blob) and a CSV step log.
pub fn cmd_train(
    cfg: &PipelineConfig,
    manifest: &Path,
    out: &Path,
    log: &Path,
) -> anyhow::Result<()> {
    let chunks = load_train_chunks(cfg, manifest, true)?;
    let pool = cfg.pool()?;
    let outcome = train(&chunks, &pool, &cfg.train_config())?;
    save_checkpoint(&outcome.params, out)?;
    write_text(log, &outcome.log.to_csv())?;

    let last = outcome.log.records.last();
    let final_loss = last.map_or(0.0, |r| r.loss);
    let skipped: usize = outcome.log.records.iter().map(|r| r.skipped).sum();
    if skipped > 0 {
        warn(format!("{skipped} unsamplable chunk draws were skipped"));
    }
    println!(
        "trained {} steps on {} chunks, final loss {final_loss:.6} -> {}.json/.bin, log {}",
        outcome.log.records.len(),
        chunks.len(),
        out.display(),
        log.display()
    );
    Ok(())
}

/// Turn beat times (seconds from chunk start) into a strict peak sequence on
/// the frame grid, dropping collisions closer than 2 frames.
fn beats_to_peaks(times: &[f64], t_len: usize) -> (Vec<usize>, usize) {
    let mut frames = Vec::with_capacity(times.len());
    let mut dropped = 0usize;
    for &t in times {
        let f = tatum_core::dsp::time_to_frame(t, TARGET_SAMPLE_RATE, t_len);
        match frames.last() {
            Some(&last) if f < last + 2 => dropped += 1,
            _ => frames.push(f),
        }
    }
    (frames, dropped)
}

/// `selftrain <manifest> <pseudo_dir>`: fine-tune on pseudo-label beats; the
/// loss runs on the shared representation, never on projection heads.
pub fn cmd_selftrain(
    cfg: &PipelineConfig,
    manifest: &Path,
    pseudo_dir: &Path,
    init: Option<&Path>,
    out: &Path,
    log: &Path,
) -> anyhow::Result<()> {
    require_file(manifest)?;
    require_dir(pseudo_dir)?;
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        anyhow::bail!("manifest {} has no chunks", manifest.display());
    }

    let mut corpus = Vec::new();
    for rec in &records {
        let id = record_chunk_id(rec);
        let beats_path = pseudo_dir.join(format!("{id}.beats"));
        if !beats_path.is_file() {
            warn(format!("{id}: no pseudo beats at {}, skipped", beats_path.display()));
            continue;
        }
        let audio = load_chunk_audio(manifest, rec)?;
        let feat = extract(&audio, cfg.features)?;
        let encode_feat = lag_stack(&feat, &cfg.lags);
        let t_len = encode_feat.num_frames();
        let annotation = parse_beats(&beats_path)?;
        let (frames, dropped) = beats_to_peaks(&annotation.beat_times(), t_len);
        if dropped > 0 {
            warn(format!("{id}: {dropped} pseudo beats collide on the frame grid, dropped"));
        }
        if frames.len() < 2 {
            warn(format!("{id}: fewer than 2 usable pseudo beats, skipped"));
            continue;
        }
        let pseudo_beats = PlpResult::from_peaks(&frames, t_len)?;
        corpus.push(SelfTrainChunk { id, encode_feat, pseudo_beats });
    }
    if corpus.is_empty() {
        anyhow::bail!("no chunk has usable pseudo beats");
    }

    let pool = cfg.pool()?;
    let mut params = match init {
        Some(base) => {
            require_file(&base.with_extension("json"))?;
            load_checkpoint(base)?
        }
        None => {
            let d_in = corpus[0].encode_feat.dim();
            let dims = Dims {
                d_in,
                d_hidden: cfg.d_hidden,
                d_z: cfg.d_z,
                d_head: cfg.d_head,
                n_heads: pool.len(),
            };
            EncoderParams::init(dims, cfg.seed)
        }
    };

    let train_log = self_train(&corpus, &mut params, &cfg.train_config())?;
    save_checkpoint(&params, out)?;
    write_text(log, &train_log.to_csv())?;

    let final_loss = train_log.records.last().map_or(0.0, |r| r.loss);
    println!(
        "self-trained {} steps on {} chunks, final loss {final_loss:.6} -> {}.json/.bin, log {}",
        train_log.records.len(),
        corpus.len(),
        out.display(),
        log.display()
    );
    Ok(())
}

/// `eval <est_dir> <ref_dir>`: beat metrics as JSON plus an aligned table.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    est_dir: &Path,
    ref_dir: &Path,
    downbeat: bool,
    trim: Option<f64>,
    json_out: &Path,
) -> anyhow::Result<()> {
    require_dir(est_dir)?;
    require_dir(ref_dir)?;
    let mut mc = cfg.metrics_config();
    mc.downbeat |= downbeat;
    if let Some(t) = trim {
        if t < 0.0 {
            return Err(anyhow::Error::new(crate::config::ConfigError(
                "trim must be non-negative".into(),
            )));
        }
        mc.trim_s = t;
    }

    let (report, warnings) = evaluate_dirs(est_dir, ref_dir, &mc)?;
    for w in &warnings {
        warn(w);
    }
    if report.tracks.is_empty() {
        warn("no estimate/reference pairs found");
    }

    let text = serde_json::to_string_pretty(&report).context("serializing report")?;
    write_text(json_out, &format!("{text}\n"))?;
    print!("{}", report.to_text());
    println!("report -> {}", json_out.display());
    Ok(())
}

/// `bench-selection`: hypothesis-selection accuracy study over a noise grid.
pub fn cmd_bench_selection(
    cfg: &PipelineConfig,
    chunks: Option<usize>,
    sigmas: Option<&str>,
    csv: &Path,
    table: &Path,
) -> anyhow::Result<()> {
    let mut study = SelectionStudyConfig {
        source: FeatureSource::Template,
        tau: cfg.tau,
        triplet: cfg.triplet_config(),
        seed: cfg.seed,
        ..SelectionStudyConfig::default()
    };
    if let Some(n) = chunks {
        if n == 0 {
            return Err(anyhow::Error::new(crate::config::ConfigError(
                "chunks must be at least 1".into(),
            )));
        }
        study.chunks_per_cell = n;
    }
    if let Some(list) = sigmas {
        let parsed: Result<Vec<f64>, _> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        study.sigmas = parsed.map_err(|e| {
            anyhow::Error::new(crate::config::ConfigError(format!("bad sigma list: {e}")))
        })?;
        if study.sigmas.is_empty() {
            return Err(anyhow::Error::new(crate::config::ConfigError(
                "sigma list is empty".into(),
            )));
        }
    }

    let pool = cfg.pool()?;
    let result = run_selection_study(&study, &pool)?;
    write_text(csv, &result.to_csv())?;
    write_text(table, &result.to_text())?;
    print!("{}", result.to_text());
    println!("csv -> {}, table -> {}", csv.display(), table.display());
    Ok(())
}

/// `bench-pretrain`: pre-training strategy comparison by linear probe.
pub fn cmd_bench_pretrain(
    cfg: &PipelineConfig,
    chunks: Option<usize>,
    steps: Option<usize>,
    csv: &Path,
    table: &Path,
) -> anyhow::Result<()> {
    let mut study = PretrainStudyConfig {
        tau: cfg.tau,
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        ..PretrainStudyConfig::default()
    };
    if let Some(n) = chunks {
        if n == 0 {
            return Err(anyhow::Error::new(crate::config::ConfigError(
                "chunks must be at least 1".into(),
            )));
        }
        study.n_chunks = n;
    }
    if let Some(n) = steps {
        if n == 0 {
            return Err(anyhow::Error::new(crate::config::ConfigError(
                "steps must be at least 1".into(),
            )));
        }
        study.steps = n;
    }

    let pool = cfg.pool()?;
    let report = run_pretrain_study(&study, &pool)?;
    write_text(csv, &report.to_csv())?;
    write_text(table, &report.to_text())?;
    print!("{}", report.to_text());
    println!("csv -> {}, table -> {}", csv.display(), table.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_ids_embed_offset_milliseconds() {
        let rec = ChunkRecord {
            source_id: "track".into(),
            offset: 20.0,
            duration: 20.0,
            audio: "track.wav".into(),
        };
        assert_eq!(record_chunk_id(&rec), "track-00020000");
    }

    #[test]
    fn beats_collapse_to_strictly_separated_peaks() {
        // 0.50 s and 0.52 s land on frames 24 and 25: closer than 2 frames.
        let (frames, dropped) = beats_to_peaks(&[0.5, 0.52, 1.0], 200);
        assert_eq!(frames.len(), 2);
        assert_eq!(dropped, 1);
        assert!(frames.windows(2).all(|w| w[1] >= w[0] + 2));
    }

    #[test]
    fn median_interval_handles_even_and_odd_counts() {
        let m = median_interval_s(&[0, 25, 50, 75], TARGET_SAMPLE_RATE).unwrap();
        assert!((m - 0.5).abs() < 1e-9);
        assert!(median_interval_s(&[3], TARGET_SAMPLE_RATE).is_none());
    }
}
