//! Audio and annotation ingest: WAV decoding, resampling, chunk cutting,
//! `.beats` annotation files, and the JSON-lines chunk manifest.

pub mod resample;
pub mod wav;

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub use resample::resample;
pub use wav::{read_wav, write_wav_mono16, DecodedWav};

/// Analysis sample rate used by the whole pipeline.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// A contiguous span of mono audio at a known sample rate.
#[derive(Debug, Clone)]
pub struct AudioChunk {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    /// Identifier of the source track this chunk was cut from.
    pub source_id: String,
    /// Offset of the chunk start within the source track, in seconds.
    pub offset_s: f64,
}

impl AudioChunk {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Load a WAV file, mix to mono, and resample to `target_rate`.
pub fn load_audio(path: &Path, target_rate: u32) -> Result<AudioChunk> {
    let decoded = wav::read_wav(path)?;
    let samples = resample::resample(&decoded.samples, decoded.sample_rate, target_rate);
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned());
    Ok(AudioChunk {
        samples,
        sample_rate: target_rate,
        source_id,
        offset_s: 0.0,
    })
}

/// Cut up to `max_chunks` non-overlapping chunks of `chunk_s` seconds from a track.
///
/// Chunk starts are evenly spaced over the usable range; a remainder shorter
/// than `chunk_s` is discarded. Offsets are computed in whole samples so every
/// returned chunk has exactly the same length.
pub fn cut_chunks(track: &AudioChunk, chunk_s: f64, max_chunks: usize) -> Vec<AudioChunk> {
    assert!(chunk_s > 0.0, "chunk length must be positive");
    let len = (chunk_s * track.sample_rate as f64).round() as usize;
    if len == 0 || max_chunks == 0 {
        return Vec::new();
    }
    let n = track.samples.len();
    let n_fit = n / len;
    let k = n_fit.min(max_chunks);
    if k == 0 {
        return Vec::new();
    }

    let span = n - len; // last admissible start offset
    (0..k)
        .map(|i| {
            let offset = if k == 1 { 0 } else { i * span / (k - 1) };
            AudioChunk {
                samples: track.samples[offset..offset + len].to_vec(),
                sample_rate: track.sample_rate,
                source_id: track.source_id.clone(),
                offset_s: track.offset_s + offset as f64 / track.sample_rate as f64,
            }
        })
        .collect()
}

/// One annotated beat: a time in seconds and its position in the bar
/// (1 = downbeat, 0 = position unknown).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatEvent {
    pub time: f64,
    pub position: u32,
}

/// A beat annotation: strictly increasing beat times with bar positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeatAnnotation {
    pub events: Vec<BeatEvent>,
}

impl BeatAnnotation {
    /// Annotation from bare times; every event gets bar position 0.
    pub fn from_times(times: &[f64]) -> Self {
        BeatAnnotation {
            events: times.iter().map(|&time| BeatEvent { time, position: 0 }).collect(),
        }
    }

    pub fn beat_times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }

    /// Times of events on bar position 1.
    pub fn downbeat_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.position == 1)
            .map(|e| e.time)
            .collect()
    }
}

/// Parse a `.beats` annotation file: one `<time> <position>` pair per line,
/// whitespace separated; the position column is optional and defaults to 0.
pub fn parse_beats(path: &Path) -> Result<BeatAnnotation> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    parse_beats_str(&text, path)
}

/// Parse `.beats` content from a string; `path` is used for error messages only.
pub fn parse_beats_str(text: &str, path: &Path) -> Result<BeatAnnotation> {
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let time_field = fields.next().unwrap();
        let time: f64 = time_field.parse().map_err(|_| CoreError::Annotation {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("non-numeric time {time_field:?}"),
        })?;
        if !time.is_finite() {
            return Err(CoreError::Annotation {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("non-finite time {time_field:?}"),
            });
        }
        let position = match fields.next() {
            None => 0,
            Some(p) => p.parse().map_err(|_| CoreError::Annotation {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("bad bar position {p:?}"),
            })?,
        };
        if let Some(prev) = events.last() {
            let prev: &BeatEvent = prev;
            if time <= prev.time {
                return Err(CoreError::Annotation {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("non-increasing time {time} after {}", prev.time),
                });
            }
        }
        events.push(BeatEvent { time, position });
    }
    Ok(BeatAnnotation { events })
}

/// Serialize an annotation in the `.beats` layout (microsecond time precision).
pub fn beats_to_string(annotation: &BeatAnnotation) -> String {
    let mut out = String::new();
    for e in &annotation.events {
        let _ = writeln!(out, "{:.6}\t{}", e.time, e.position);
    }
    out
}

pub fn write_beats(path: &Path, annotation: &BeatAnnotation) -> Result<()> {
    std::fs::write(path, beats_to_string(annotation)).map_err(|e| CoreError::io(path, e))
}

/// One mined chunk in the JSON-lines manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChunkRecord {
    pub source_id: String,
    /// Chunk start within the source track, seconds.
    pub offset: f64,
    /// Chunk duration, seconds.
    pub duration: f64,
    /// Audio path, relative to the manifest location.
    pub audio: String,
}

/// Write chunk records as JSON lines.
pub fn write_manifest(path: &Path, records: &[ChunkRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("manifest record serializes");
        writeln!(w, "{line}").map_err(|e| CoreError::io(path, e))?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

/// Read a JSON-lines chunk manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<ChunkRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CoreError::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", idx + 1),
        })?;
        records.push(record);
    }
    Ok(records)
}
