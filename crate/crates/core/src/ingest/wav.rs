//! WAV decoding and encoding.
//!
//! Supports PCM 16/24/32-bit integer and 32-bit float, mono or stereo.
//! Multi-channel input is mixed down by channel mean.

use std::path::Path;

use crate::error::{CoreError, Result};

/// Decoded audio: mono samples in `[-1, 1]` plus the file's sample rate.
pub struct DecodedWav {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

/// Read a WAV file and mix it down to mono.
pub fn read_wav(path: &Path) -> Result<DecodedWav> {
    let reader = hound::WavReader::open(path).map_err(|e| CoreError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(CoreError::Wav {
            path: path.to_path_buf(),
            message: "zero channels".into(),
        });
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => collect_samples::<f32, _>(reader, path, |s| s)?,
        (hound::SampleFormat::Int, 16) => {
            collect_samples::<i32, _>(reader, path, |s| s as f32 / 32768.0)?
        }
        (hound::SampleFormat::Int, 24) => {
            collect_samples::<i32, _>(reader, path, |s| s as f32 / 8_388_608.0)?
        }
        (hound::SampleFormat::Int, 32) => {
            collect_samples::<i32, _>(reader, path, |s| s as f32 / 2_147_483_648.0)?
        }
        (format, bits) => {
            return Err(CoreError::Wav {
                path: path.to_path_buf(),
                message: format!("unsupported encoding: {format:?} {bits}-bit"),
            })
        }
    };

    if interleaved.is_empty() {
        return Err(CoreError::EmptyAudio(path.to_path_buf()));
    }

    let channels = spec.channels as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };

    Ok(DecodedWav {
        samples,
        sample_rate: spec.sample_rate,
    })
}

fn collect_samples<S, F>(
    reader: hound::WavReader<std::io::BufReader<std::fs::File>>,
    path: &Path,
    convert: F,
) -> Result<Vec<f32>>
where
    S: hound::Sample,
    F: Fn(S) -> f32,
{
    reader
        .into_samples::<S>()
        .map(|s| {
            s.map(&convert).map_err(|e| CoreError::Wav {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Write mono samples as 16-bit PCM.
pub fn write_wav_mono16(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| CoreError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| CoreError::Wav {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| CoreError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
