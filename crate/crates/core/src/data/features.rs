//! Binary per-frame feature files.
//!
//! Layout: `MSFEAT01` magic, `u32` LE frame count `T`, `u32` LE dimension
//! `D`, then `T·D` little-endian `f32` values, frame-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &[u8; 8] = b"MSFEAT01";
const HEADER_LEN: usize = 16;

pub fn encode_features(features: &Matrix<f32>) -> Result<Vec<u8>> {
    if !features.all_finite() {
        return Err(Error::Data("feature matrix contains non-finite values".into()));
    }
    let t = u32::try_from(features.rows()).map_err(|_| Error::Data("too many frames".into()))?;
    let d = u32::try_from(features.cols()).map_err(|_| Error::Data("dimension too large".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * features.len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    for v in features.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix<f32>> {
    if bytes.len() < 8 {
        return Err(Error::format(bytes.len() as u64, "file shorter than the magic"));
    }
    if &bytes[..6] != b"MSFEAT" {
        return Err(Error::format(0, "bad magic, not a feature file"));
    }
    if &bytes[..8] != FEATURE_MAGIC {
        return Err(Error::format(
            6,
            format!(
                "unsupported feature file version {:?}",
                String::from_utf8_lossy(&bytes[6..8])
            ),
        ));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "truncated header"));
    }
    let t = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let payload = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(8, format!("frame count {t} × dimension {d} overflows")))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {payload} bytes, found {}", body.len()),
        ));
    }
    if body.len() > payload {
        return Err(Error::format(
            (HEADER_LEN + payload) as u64,
            format!("{} trailing bytes after payload", body.len() - payload),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Matrix::new(t, d, data)
}

pub fn write_feature_file(path: impl AsRef<Path>, features: &Matrix<f32>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(features)?).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Matrix<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}
