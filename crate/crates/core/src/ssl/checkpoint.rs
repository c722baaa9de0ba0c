//! Encoder checkpoints: a small JSON header next to a little-endian f64 blob.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ssl::params::{Dims, EncoderParams};

const FORMAT: &str = "encoder-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    dims: Dims,
    /// Number of f64 values in the payload.
    count: usize,
    payload: String,
}

/// Write `{base}.json` and `{base}.bin`.
pub fn save_checkpoint(params: &EncoderParams, base: &Path) -> Result<()> {
    let header_path = base.with_extension("json");
    let payload_path = base.with_extension("bin");
    let payload_name = payload_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| CoreError::InvalidArgument(format!("bad checkpoint path {base:?}")))?;

    let flat = params.to_flat();
    let header = CheckpointHeader {
        format: FORMAT.to_string(),
        dims: params.dims,
        count: flat.len(),
        payload: payload_name,
    };
    let text = serde_json::to_string_pretty(&header)
        .map_err(|e| CoreError::Format { path: header_path.clone(), message: e.to_string() })?;
    std::fs::write(&header_path, text).map_err(|e| CoreError::io(&header_path, e))?;

    let mut file = std::io::BufWriter::new(
        std::fs::File::create(&payload_path).map_err(|e| CoreError::io(&payload_path, e))?,
    );
    for v in &flat {
        file.write_all(&v.to_le_bytes()).map_err(|e| CoreError::io(&payload_path, e))?;
    }
    file.flush().map_err(|e| CoreError::io(&payload_path, e))?;
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(base: &Path) -> Result<EncoderParams> {
    let header_path = base.with_extension("json");
    let text = std::fs::read_to_string(&header_path).map_err(|e| CoreError::io(&header_path, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text).map_err(|e| CoreError::Format {
        path: header_path.clone(),
        message: e.to_string(),
    })?;
    if header.format != FORMAT {
        return Err(CoreError::Format {
            path: header_path,
            message: format!("unknown checkpoint format {:?}", header.format),
        });
    }
    if header.count != header.dims.param_count() {
        return Err(CoreError::Format {
            path: header_path,
            message: format!(
                "header promises {} values, dims need {}",
                header.count,
                header.dims.param_count()
            ),
        });
    }

    let payload_path: PathBuf = match header_path.parent() {
        Some(dir) => dir.join(&header.payload),
        None => PathBuf::from(&header.payload),
    };
    let mut bytes = Vec::new();
    std::fs::File::open(&payload_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| CoreError::io(&payload_path, e))?;
    if bytes.len() != header.count * 8 {
        return Err(CoreError::Format {
            path: payload_path,
            message: format!("payload is {} bytes, expected {}", bytes.len(), header.count * 8),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks_exact(8)")))
        .collect();
    EncoderParams::from_flat(header.dims, &flat)
}
