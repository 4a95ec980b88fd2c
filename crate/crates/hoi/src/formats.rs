//! Little-endian binary formats: motions (`HOIM`), point clouds (`HOIP`)
//! and named-tensor checkpoints (`HOIT`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hoi_core::numerics::Tensor;

use crate::error::{FormatErrorKind, HoiError, Result};

pub const VERSION: u32 = 1;

/// Decoding failure before a path is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError {
    pub offset: usize,
    pub kind: FormatErrorKind,
}

impl DecodeError {
    fn at(self, path: &Path) -> HoiError {
        HoiError::Format {
            path: path.to_path_buf(),
            offset: self.offset,
            kind: self.kind,
        }
    }
}

type Decoded<T> = std::result::Result<T, DecodeError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Decoded<&'a [u8]> {
        let need = self.pos.checked_add(n).unwrap_or(usize::MAX);
        if need > self.buf.len() {
            return Err(DecodeError {
                offset: self.pos,
                kind: FormatErrorKind::Truncated { need, have: self.buf.len() },
            });
        }
        let s = &self.buf[self.pos..need];
        self.pos = need;
        Ok(s)
    }

    fn u32(&mut self) -> Decoded<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Decoded<()> {
        let found = self.take(4)?;
        if found != magic {
            return Err(DecodeError {
                offset: 0,
                kind: FormatErrorKind::BadMagic {
                    expected: String::from_utf8_lossy(magic).into_owned(),
                    found: String::from_utf8_lossy(found).into_owned(),
                },
            });
        }
        let off = self.pos;
        let v = self.u32()?;
        if v != VERSION {
            return Err(DecodeError {
                offset: off,
                kind: FormatErrorKind::Version(v),
            });
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Decoded<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).unwrap_or(usize::MAX))?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(self) -> Decoded<()> {
        if self.pos != self.buf.len() {
            return Err(DecodeError {
                offset: self.pos,
                kind: FormatErrorKind::Trailing(self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, data: &[f32]) {
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn invalid(offset: usize, msg: impl Into<String>) -> DecodeError {
    DecodeError {
        offset,
        kind: FormatErrorKind::Invalid(msg.into()),
    }
}

pub fn encode_motion(frames: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * frames.len());
    out.extend_from_slice(b"HOIM");
    put_u32(&mut out, VERSION);
    put_u32(&mut out, frames.rows() as u32);
    put_u32(&mut out, frames.cols() as u32);
    put_f32s(&mut out, frames.data());
    out
}

pub fn decode_motion(buf: &[u8]) -> Decoded<Tensor<f32>> {
    let mut r = Reader::new(buf);
    r.header(b"HOIM")?;
    let (l, d) = (r.u32()? as usize, r.u32()? as usize);
    let data = r.f32s(l.saturating_mul(d))?;
    r.finish()?;
    Tensor::new([l, d], data).map_err(|e| invalid(8, e.to_string()))
}

pub fn encode_points(points: &[[f32; 3]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 12 * points.len());
    out.extend_from_slice(b"HOIP");
    put_u32(&mut out, VERSION);
    put_u32(&mut out, points.len() as u32);
    for p in points {
        put_f32s(&mut out, p);
    }
    out
}

pub fn decode_points(buf: &[u8]) -> Decoded<Vec<[f32; 3]>> {
    let mut r = Reader::new(buf);
    r.header(b"HOIP")?;
    let n = r.u32()? as usize;
    let data = r.f32s(n.saturating_mul(3))?;
    r.finish()?;
    Ok(data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Named tensors in the order given.
pub fn encode_checkpoint(entries: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"HOIT");
    put_u32(&mut out, VERSION);
    put_u32(&mut out, entries.len() as u32);
    for (name, t) in entries {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.dims().len() as u32);
        for &d in t.dims() {
            put_u32(&mut out, d as u32);
        }
        put_f32s(&mut out, t.data());
    }
    out
}

pub fn decode_checkpoint(buf: &[u8]) -> Decoded<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader::new(buf);
    r.header(b"HOIT")?;
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let off = r.pos;
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| invalid(off + 4, "entry name is not UTF-8"))?
            .to_owned();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
        let data = r.f32s(n)?;
        let t = Tensor::new(dims, data).map_err(|e| invalid(off, e.to_string()))?;
        out.push((name, t));
    }
    r.finish()?;
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| HoiError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HoiError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| HoiError::io(path, e))
}

pub fn write_motion(path: &Path, frames: &Tensor<f32>) -> Result<()> {
    write_bytes(path, &encode_motion(frames))
}

pub fn read_motion(path: &Path) -> Result<Tensor<f32>> {
    decode_motion(&read(path)?).map_err(|e| e.at(path))
}

pub fn write_points(path: &Path, points: &[[f32; 3]]) -> Result<()> {
    write_bytes(path, &encode_points(points))
}

pub fn read_points(path: &Path) -> Result<Vec<[f32; 3]>> {
    decode_points(&read(path)?).map_err(|e| e.at(path))
}

pub fn write_checkpoint(path: &Path, entries: &[(String, Tensor<f32>)]) -> Result<()> {
    write_bytes(path, &encode_checkpoint(entries))
}

pub fn read_checkpoint(path: &Path) -> Result<BTreeMap<String, Tensor<f32>>> {
    Ok(decode_checkpoint(&read(path)?).map_err(|e| e.at(path))?.into_iter().collect())
}
