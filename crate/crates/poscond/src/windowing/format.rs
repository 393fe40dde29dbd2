//! Tensor file format: 8-byte magic `PCONDT01`, a little-endian u32 header
//! length, a JSON header (dimensions, word index map, manifest, payload
//! digest), then the payload as little-endian f64 in row-major [L, W, P]
//! order.

use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ConductanceTensor, TensorManifest, WindowingError};

pub const TENSOR_MAGIC: &[u8; 8] = b"PCONDT01";

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    layers: usize,
    words: usize,
    window_len: usize,
    word_index_map: Vec<usize>,
    manifest: TensorManifest,
    payload_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn io_err(path: &Path, source: std::io::Error) -> WindowingError {
    WindowingError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serializes a tensor; the round trip through [`load_tensor`] is bit-exact.
pub fn save_tensor(tensor: &ConductanceTensor, path: &Path) -> Result<(), WindowingError> {
    let (layers, words, window_len) = tensor.data.dim();
    let mut payload = Vec::with_capacity(layers * words * window_len * 8);
    for l in 0..layers {
        for w in 0..words {
            for p in 0..window_len {
                payload.extend_from_slice(&tensor.data[[l, w, p]].to_le_bytes());
            }
        }
    }
    let header = TensorHeader {
        layers,
        words,
        window_len,
        word_index_map: tensor.word_index_map.clone(),
        manifest: tensor.manifest.clone(),
        payload_sha256: sha256_hex(&payload),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(WindowingError::HeaderEncode)?;
    let mut out = Vec::with_capacity(8 + 4 + header_bytes.len() + payload.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Loads a tensor, verifying magic, header integrity, and the payload
/// checksum.
pub fn load_tensor(path: &Path) -> Result<ConductanceTensor, WindowingError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 12 {
        return Err(WindowingError::ChecksumMismatch);
    }
    if &bytes[0..8] != TENSOR_MAGIC {
        return Err(WindowingError::FormatVersionMismatch {
            found: String::from_utf8_lossy(&bytes[0..8]).into_owned(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(WindowingError::ChecksumMismatch);
    }
    let header: TensorHeader =
        serde_json::from_slice(&bytes[12..12 + header_len]).map_err(WindowingError::HeaderEncode)?;
    let payload = &bytes[12 + header_len..];
    let expected_len = header.layers * header.words * header.window_len * 8;
    if payload.len() != expected_len || sha256_hex(payload) != header.payload_sha256 {
        return Err(WindowingError::ChecksumMismatch);
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array3::from_shape_vec((header.layers, header.words, header.window_len), values)
        .expect("payload length was validated against the header dimensions");
    Ok(ConductanceTensor {
        data,
        word_index_map: header.word_index_map,
        manifest: header.manifest,
    })
}
