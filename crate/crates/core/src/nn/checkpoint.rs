//! Named-tensor checkpoint file: magic `EKMW`, u32 version, u32 entry count,
//! then per entry u32 name length, UTF-8 name, u32 rank, u32 dims, and the f32
//! payload. All little-endian.

use std::path::Path;

use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"EKMW";

pub fn encode_checkpoint<F: Scalar>(entries: &[(String, Tensor<F>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<F: Scalar>(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor<F>)>> {
    let mut c = Cursor {
        bytes,
        pos: 0,
        path,
    };
    if c.take(4)? != MAGIC {
        return Err(Error::format(path, "missing EKMW header"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {version}"),
        ));
    }
    let count = c.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::format(path, "entry name is not UTF-8"))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = c
            .take(n * 4)?
            .chunks_exact(4)
            .map(|b| F::from_f64(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::format(path, e.to_string()))?;
        entries.push((name, t));
    }
    if c.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn write_checkpoint<F: Scalar>(
    path: impl AsRef<Path>,
    entries: &[(String, Tensor<F>)],
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(entries)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor<F>)>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
