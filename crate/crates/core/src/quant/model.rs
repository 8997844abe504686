//! FLXQ persistence for a fitted FSQ + RVQ pair.
//!
//! ```text
//! "FLXQ" | version u8 = 1
//! FSQ: d u32 | D u32 | L u32 | mean d*f32 | down (d*D)*f32 | up (D*d)*f32 | lo D*f32 | hi D*f32
//! RVQ: layers u32 | K u32 | d u32 | codewords (layers*K*d)*f32
//! fingerprint u64 = FNV-1a 64 over every preceding byte
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quant::fsq::FsqCodec;
use crate::quant::rvq::RvqCodebooks;

pub const FLXQ_MAGIC: &[u8; 4] = b"FLXQ";
pub const FLXQ_VERSION: u8 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// The semantic FSQ and acoustic RVQ quantizers that a bitstream refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecModel {
    pub fsq: FsqCodec,
    pub rvq: RvqCodebooks,
}

impl CodecModel {
    pub fn new(fsq: FsqCodec, rvq: RvqCodebooks) -> Result<Self> {
        if fsq.dim() != rvq.dim() {
            return Err(Error::Shape(format!(
                "FSQ works in dimension {} but RVQ in {}",
                fsq.dim(),
                rvq.dim()
            )));
        }
        Ok(Self { fsq, rvq })
    }

    pub fn dim(&self) -> usize {
        self.fsq.dim()
    }

    /// Serialized bytes including the trailing fingerprint.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FLXQ_MAGIC);
        out.push(FLXQ_VERSION);
        let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        let put_f32s = |out: &mut Vec<u8>, vs: &[f32]| {
            for v in vs {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        put_u32(&mut out, self.fsq.dim());
        put_u32(&mut out, self.fsq.dims());
        put_u32(&mut out, self.fsq.levels() as usize);
        put_f32s(&mut out, self.fsq.mean());
        put_f32s(&mut out, self.fsq.down_proj());
        put_f32s(&mut out, self.fsq.up_proj());
        put_f32s(&mut out, self.fsq.lower_bounds());
        put_f32s(&mut out, self.fsq.upper_bounds());
        put_u32(&mut out, self.rvq.num_layers());
        put_u32(&mut out, self.rvq.k());
        put_u32(&mut out, self.rvq.dim());
        for i in 0..self.rvq.num_layers() {
            put_f32s(&mut out, self.rvq.layer(i));
        }
        let fp = fnv1a64(&out);
        out.extend_from_slice(&fp.to_le_bytes());
        out
    }

    pub fn fingerprint(&self) -> u64 {
        let bytes = self.to_bytes();
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FLXQ_MAGIC {
            return Err(Error::Format("not an FLXQ file (bad magic)".into()));
        }
        if bytes.len() < 5 + 8 {
            return Err(Error::Corrupt("FLXQ file truncated".into()));
        }
        if bytes[4] != FLXQ_VERSION {
            return Err(Error::Format(format!("unsupported FLXQ version {}", bytes[4])));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a64(body) != stored {
            return Err(Error::Corrupt("FLXQ fingerprint does not match contents".into()));
        }
        let mut r = Reader { buf: body, pos: 5 };
        let dim = r.u32()? as usize;
        let dims = r.u32()? as usize;
        let levels = r.u32()?;
        let mean = r.f32s(dim)?;
        let down = r.f32s(dim.checked_mul(dims).ok_or_else(overflow)?)?;
        let up = r.f32s(dim * dims)?;
        let lo = r.f32s(dims)?;
        let hi = r.f32s(dims)?;
        let fsq = FsqCodec::from_parts(dim, dims, levels, mean, down, up, lo, hi)
            .map_err(|e| Error::Format(format!("invalid FSQ section: {e}")))?;
        let layers = r.u32()? as usize;
        let k = r.u32()? as usize;
        let rvq_dim = r.u32()? as usize;
        let per_layer = k.checked_mul(rvq_dim).ok_or_else(overflow)?;
        let mut books = Vec::with_capacity(layers.min(1024));
        for _ in 0..layers {
            books.push(r.f32s(per_layer)?);
        }
        if r.pos != body.len() {
            return Err(Error::Corrupt(format!(
                "{} unexpected bytes in FLXQ body",
                body.len() - r.pos
            )));
        }
        let rvq =
            RvqCodebooks::new(books, k, rvq_dim).map_err(|e| Error::Format(format!("invalid RVQ section: {e}")))?;
        Self::new(fsq, rvq)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn overflow() -> Error {
    Error::Format("FLXQ section sizes overflow".into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corrupt(format!("FLXQ truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(overflow)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
