//! Per-frame feature matrices and their on-disk dump format.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Feature kinds supported by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Mel,
    ChromaStft,
    ChromaVqt,
    Mfcc,
    /// Onset strength curve (dimension 1).
    Osf,
    /// Lag-stacked copy of another feature kind.
    Stacked,
    /// Synthetic feature matrix from the benchmark generator.
    Synthetic,
}

impl FeatureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::ChromaStft => "chroma-stft",
            FeatureKind::ChromaVqt => "chroma-vqt",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Osf => "osf",
            FeatureKind::Stacked => "stacked",
            FeatureKind::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(FeatureKind::Mel),
            "chroma-stft" => Ok(FeatureKind::ChromaStft),
            "chroma-vqt" => Ok(FeatureKind::ChromaVqt),
            "mfcc" => Ok(FeatureKind::Mfcc),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown feature kind {other:?} (expected mel|chroma-stft|chroma-vqt|mfcc)"
            ))),
        }
    }
}

/// A `T x d` matrix of per-frame feature vectors on the shared hop grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// Row `t` is the feature vector of frame `t`.
    pub frames: Array2<f64>,
    /// Hop between frames in seconds.
    pub hop_s: f64,
    pub kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>, hop_s: f64, kind: FeatureKind) -> Result<Self> {
        if !hop_s.is_finite() || hop_s <= 0.0 {
            return Err(CoreError::InvalidArgument(format!("bad hop {hop_s}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Shape("non-finite feature value".into()));
        }
        Ok(FeatureSequence { frames, hop_s, kind })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }
}

/// Stack a feature sequence with time-lagged copies of itself.
///
/// Output row `t` is the concatenation of rows `t - lag` for each requested
/// lag; lags reaching past the start of the sequence clamp to frame 0.
pub fn lag_stack(feat: &FeatureSequence, lags: &[usize]) -> FeatureSequence {
    assert!(!lags.is_empty(), "need at least one lag");
    let t_len = feat.num_frames();
    let d = feat.dim();
    let mut out = Array2::zeros((t_len, d * lags.len()));
    for t in 0..t_len {
        for (j, &lag) in lags.iter().enumerate() {
            let src = t.saturating_sub(lag);
            out.row_mut(t)
                .slice_mut(ndarray::s![j * d..(j + 1) * d])
                .assign(&feat.row(src));
        }
    }
    FeatureSequence {
        frames: out,
        hop_s: feat.hop_s,
        kind: FeatureKind::Stacked,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DumpHeader {
    kind: FeatureKind,
    hop_s: f64,
    t: usize,
    d_v: usize,
    /// File name of the binary payload, relative to the header.
    payload: String,
}

/// Write a feature dump: JSON header at `base.json` plus a row-major
/// little-endian float32 payload at `base.bin`.
pub fn write_feature_dump(feat: &FeatureSequence, base: &Path) -> Result<()> {
    let header_path = base.with_extension("json");
    let payload_path = base.with_extension("bin");
    let payload_name = payload_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CoreError::InvalidArgument(format!("bad dump path {base:?}")))?;

    let header = DumpHeader {
        kind: feat.kind,
        hop_s: feat.hop_s,
        t: feat.num_frames(),
        d_v: feat.dim(),
        payload: payload_name,
    };
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    std::fs::write(&header_path, text).map_err(|e| CoreError::io(&header_path, e))?;

    let file =
        std::fs::File::create(&payload_path).map_err(|e| CoreError::io(&payload_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for &v in feat.frames.iter() {
        w.write_all(&(v as f32).to_le_bytes())
            .map_err(|e| CoreError::io(&payload_path, e))?;
    }
    w.flush().map_err(|e| CoreError::io(&payload_path, e))
}

/// Read a feature dump written by [`write_feature_dump`].
pub fn read_feature_dump(base: &Path) -> Result<FeatureSequence> {
    let header_path = base.with_extension("json");
    let text = std::fs::read_to_string(&header_path).map_err(|e| CoreError::io(&header_path, e))?;
    let header: DumpHeader = serde_json::from_str(&text).map_err(|e| CoreError::Format {
        path: header_path.clone(),
        message: e.to_string(),
    })?;

    let payload_path: PathBuf = match header_path.parent() {
        Some(dir) => dir.join(&header.payload),
        None => PathBuf::from(&header.payload),
    };
    let file = std::fs::File::open(&payload_path).map_err(|e| CoreError::io(&payload_path, e))?;
    let mut reader = std::io::BufReader::new(file);
    let mut raw = Vec::new();
    reader
        .read_to_end(&mut raw)
        .map_err(|e| CoreError::io(&payload_path, e))?;

    let expect = header.t * header.d_v * 4;
    if raw.len() != expect {
        return Err(CoreError::Format {
            path: payload_path,
            message: format!("payload is {} bytes, expected {expect}", raw.len()),
        });
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let frames = Array2::from_shape_vec((header.t, header.d_v), values)
        .map_err(|e| CoreError::Shape(e.to_string()))?;
    FeatureSequence::new(frames, header.hop_s, header.kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn seq(frames: Array2<f64>) -> FeatureSequence {
        FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).unwrap()
    }

    #[test]
    fn lag_stack_concatenates_and_clamps() {
        let feat = seq(array![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]]);
        let stacked = lag_stack(&feat, &[0, 1]);
        assert_eq!(stacked.dim(), 4);
        // Frame 0 clamps the lagged copy to frame 0.
        assert_eq!(stacked.row(0).to_vec(), vec![1.0, 10.0, 1.0, 10.0]);
        assert_eq!(stacked.row(1).to_vec(), vec![2.0, 20.0, 1.0, 10.0]);
        assert_eq!(stacked.row(2).to_vec(), vec![3.0, 30.0, 2.0, 20.0]);
    }

    #[test]
    fn lag_zero_is_identity_copy() {
        let feat = seq(array![[1.0, 2.0], [3.0, 4.0]]);
        let stacked = lag_stack(&feat, &[0]);
        assert_eq!(stacked.frames, feat.frames);
    }

    #[test]
    fn rejects_non_finite_values() {
        let frames = array![[f64::NAN]];
        assert!(FeatureSequence::new(frames, 0.02, FeatureKind::Synthetic).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let feat = seq(array![[0.5, -1.25], [3.0, 0.0625]]);
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("feat");
        write_feature_dump(&feat, &base).unwrap();
        let back = read_feature_dump(&base).unwrap();
        assert_eq!(back.kind, FeatureKind::Synthetic);
        assert_eq!(back.num_frames(), 2);
        assert_eq!(back.dim(), 2);
        // All test values are exactly representable in f32.
        assert_eq!(back.frames, feat.frames);
        assert_eq!(back.hop_s, feat.hop_s);
    }

    #[test]
    fn dump_payload_is_f32_little_endian() {
        let feat = seq(array![[1.0]]);
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("one");
        write_feature_dump(&feat, &base).unwrap();
        let raw = std::fs::read(dir.path().join("one.bin")).unwrap();
        assert_eq!(raw, 1.0f32.to_le_bytes().to_vec());
    }
}
