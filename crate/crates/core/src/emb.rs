//! The EMB1 embedding file format.
//!
//! Little-endian layout:
//!
//! ```text
//! "EMB1" | u32 n | u32 d | u8 has_tags | n*d f32 (row-major) | n u8 labels | [n * (u8 class, u8 feature)]
//! ```
//!
//! Features are stored as `f32`; writing an `f64` dataset rounds each value.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::{CategoryTag, EmbeddedDataset};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 4 + 4 + 4 + 1;

pub fn encode(x: &EmbeddedDataset) -> Vec<u8> {
    let (n, d) = (x.len(), x.dim());
    let tags = x.tags();
    let mut out = Vec::with_capacity(HEADER_LEN + n * d * 4 + n * 3);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.push(tags.is_some() as u8);
    let f = x.features();
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&(f[(i, j)] as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(x.labels());
    if let Some(tags) = tags {
        for t in tags {
            out.push(t.essential_class);
            out.push(t.nonessential_feature);
        }
    }
    out
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format { offset, message: message.into() }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(len).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
                format_err(self.buf.len(), format!("truncated payload while reading {what} (need {len} bytes at offset {})", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<EmbeddedDataset> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(format_err(0, format!("bad magic {magic:?}, expected EMB1")));
    }
    let n = c.u32("row count")? as usize;
    let d = c.u32("dimension")? as usize;
    if d == 0 {
        return Err(format_err(8, "dimension must be at least 1"));
    }
    let flag_off = c.pos;
    let has_tags = match c.take(1, "tag flag")?[0] {
        0 => false,
        1 => true,
        other => return Err(format_err(flag_off, format!("tag flag must be 0 or 1, got {other}"))),
    };
    let feat_len = n.checked_mul(d).and_then(|v| v.checked_mul(4)).ok_or_else(|| format_err(4, "n*d overflows"))?;
    let feat_off = c.pos;
    let raw = c.take(feat_len, "features")?;
    let mut values = Vec::with_capacity(n * d);
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(format_err(feat_off + 4 * k, format!("non-finite feature at row {}, column {}", k / d, k % d)));
        }
        values.push(v as f64);
    }
    let features = DMatrix::from_row_slice(n, d, &values);
    let label_off = c.pos;
    let labels = c.take(n, "labels")?.to_vec();
    if let Some(i) = labels.iter().position(|&y| y > 1) {
        return Err(format_err(label_off + i, format!("label {} is not in {{0,1}}", labels[i])));
    }
    let tags = if has_tags {
        let tag_off = c.pos;
        let raw = c.take(2 * n, "tags")?;
        let tags = raw
            .chunks_exact(2)
            .enumerate()
            .map(|(i, p)| CategoryTag::new(p[0], p[1]).map_err(|e| format_err(tag_off + 2 * i, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Some(tags)
    } else {
        None
    };
    if c.pos != bytes.len() {
        return Err(format_err(c.pos, format!("{} trailing bytes after payload", bytes.len() - c.pos)));
    }
    EmbeddedDataset::new(features, labels, tags)
}

pub fn write_to(x: &EmbeddedDataset, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&encode(x))
}

pub fn read_from(mut r: impl Read) -> std::result::Result<EmbeddedDataset, ReadError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(decode(&buf)?)
}

pub fn write_file(x: &EmbeddedDataset, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, encode(x))
}

pub fn read_file(path: impl AsRef<Path>) -> std::result::Result<EmbeddedDataset, ReadError> {
    let bytes = std::fs::read(path)?;
    Ok(decode(&bytes)?)
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Format(#[from] Error),
}
