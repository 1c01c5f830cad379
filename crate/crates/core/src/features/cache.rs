//! `.feat` files: magic `FEAT`, u32 version, u8 kind, u32 frames, u32 bins,
//! 32-byte config digest, then row-major f32 payload. All little-endian.

use std::path::Path;

use crate::error::{Error, Result};

use super::{FeatureKind, FeatureMatrix, Matrix};

pub const FEATURE_FILE_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FEAT";
const HEADER_LEN: usize = 4 + 4 + 1 + 4 + 4 + 32;

pub fn encode_feature_file(fm: &FeatureMatrix) -> Result<Vec<u8>> {
    let digest = hex::decode(&fm.config_digest)
        .ok()
        .filter(|d| d.len() == 32)
        .ok_or_else(|| Error::InvalidConfig("config digest must be 32 hex-encoded bytes".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + fm.values.data().len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FEATURE_FILE_VERSION.to_le_bytes());
    out.push(fm.kind.code());
    out.extend_from_slice(&(fm.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(fm.n_bins() as u32).to_le_bytes());
    out.extend_from_slice(&digest);
    for &v in fm.values.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_feature_file(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let bad = |r: &str| Error::format(path, r);
    if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
        return Err(bad("missing FEAT header"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FEATURE_FILE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = FeatureKind::from_code(bytes[8]).ok_or_else(|| bad("unknown feature kind"))?;
    let frames = u32_at(9) as usize;
    let bins = u32_at(13) as usize;
    let digest = hex::encode(&bytes[17..49]);
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != frames * bins * 4 {
        return Err(bad(&format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            frames * bins * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMatrix {
        values: Matrix::from_vec(frames, bins, data),
        kind,
        config_digest: digest,
    })
}

pub fn write_feature_file(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_feature_file(fm)?).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes, path)
}
