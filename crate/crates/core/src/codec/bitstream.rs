//! FLXC variable-rate token container.
//!
//! ```text
//! "FLXC" | version u8 = 1 | flags u8 = 0 | base_rate_num u32 | base_rate_den u32
//! | n_q u8 | D u8 | L u8 | K u32 | l_max u8 | source_frame_count u64 | T_hat u32
//! | codec_fingerprint u64 | payload
//! ```
//!
//! Integers are little-endian. The payload holds, per merged frame and
//! MSB-first: `length - 1` in `ceil(log2 l_max)` bits, the semantic index in
//! `ceil(log2 L^D)` bits, then `n_q - 1` acoustic indices of `ceil(log2 K)`
//! bits each. The payload is zero-padded to a byte boundary.

use crate::codec::bits::{BitReader, BitWriter};
use crate::codec::{TokenLayout, TokenStream};
use crate::error::{Error, Result};
use crate::rate::FrameRate;

pub const FLXC_MAGIC: &[u8; 4] = b"FLXC";
pub const FLXC_VERSION: u8 = 1;
pub const FLXC_HEADER_LEN: usize = 4 + 1 + 1 + 4 + 4 + 1 + 1 + 1 + 4 + 1 + 8 + 4 + 8;

/// A token stream recovered from FLXC bytes along with the fingerprint of the
/// codec it was produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct Unpacked {
    pub stream: TokenStream,
    pub fingerprint: u64,
}

pub fn pack(ts: &TokenStream, fingerprint: u64) -> Result<Vec<u8>> {
    ts.validate().map_err(|e| Error::Encoding(e.to_string()))?;
    let layout = ts.layout();
    let narrow = |what: &str, v: u64, max: u64| {
        if v > max {
            Err(Error::Encoding(format!("{what} {v} does not fit its header field")))
        } else {
            Ok(v)
        }
    };
    let n_q = narrow("n_q", ts.n_q() as u64, u8::MAX as u64)? as u8;
    let dims = narrow("FSQ dims", layout.fsq_dims as u64, u8::MAX as u64)? as u8;
    let levels = narrow("FSQ levels", layout.fsq_levels as u64, u8::MAX as u64)? as u8;
    let l_max = narrow("l_max", layout.l_max as u64, u8::MAX as u64)? as u8;
    let merged = narrow("merged frame count", ts.len() as u64, u32::MAX as u64)? as u32;

    let bits = layout.bit_layout();
    let mut out = Vec::with_capacity(FLXC_HEADER_LEN + ts.payload_bits().div_ceil(8) as usize);
    out.extend_from_slice(FLXC_MAGIC);
    out.push(FLXC_VERSION);
    out.push(0);
    out.extend_from_slice(&ts.base_rate().numer().to_le_bytes());
    out.extend_from_slice(&ts.base_rate().denom().to_le_bytes());
    out.push(n_q);
    out.push(dims);
    out.push(levels);
    out.extend_from_slice(&layout.rvq_k.to_le_bytes());
    out.push(l_max);
    out.extend_from_slice(&ts.source_frame_count().to_le_bytes());
    out.extend_from_slice(&merged.to_le_bytes());
    out.extend_from_slice(&fingerprint.to_le_bytes());

    let mut w = BitWriter::new(out);
    for k in 0..ts.len() {
        w.write(ts.lengths()[k] as u64 - 1, bits.len_bits);
        w.write(ts.semantic_indices()[k] as u64, bits.sem_bits);
        for layer in ts.acoustic_indices() {
            w.write(layer[k] as u64, bits.ac_bits);
        }
    }
    Ok(w.finish())
}

pub fn unpack(bytes: &[u8]) -> Result<Unpacked> {
    if bytes.len() < 4 || &bytes[..4] != FLXC_MAGIC {
        return Err(Error::Format("not an FLXC bitstream (bad magic)".into()));
    }
    if bytes.len() < FLXC_HEADER_LEN {
        return Err(Error::Corrupt(format!(
            "FLXC header truncated: {} of {FLXC_HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if bytes[4] != FLXC_VERSION {
        return Err(Error::Format(format!("unsupported FLXC version {}", bytes[4])));
    }
    if bytes[5] != 0 {
        return Err(Error::Format(format!("unknown FLXC flags {:#04x}", bytes[5])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let rate = FrameRate::new(u32_at(6), u32_at(10)).map_err(|e| Error::Format(format!("bad base rate: {e}")))?;
    let n_q = bytes[14] as usize;
    let layout = TokenLayout {
        fsq_dims: bytes[15] as u32,
        fsq_levels: bytes[16] as u32,
        rvq_k: u32_at(17),
        l_max: bytes[21] as u32,
    };
    let source_frames = u64_at(22);
    let merged = u32_at(30) as usize;
    let fingerprint = u64_at(34);
    if n_q == 0 {
        return Err(Error::Format("n_q must be >= 1".into()));
    }
    layout.check().map_err(|e| Error::Format(e.to_string()))?;

    let bits = layout.bit_layout();
    let per_frame = bits.frame_bits(n_q) as usize;
    let payload = &bytes[FLXC_HEADER_LEN..];
    let needed_bits = merged as u128 * per_frame as u128;
    let needed_bytes = needed_bits.div_ceil(8);
    if (payload.len() as u128) < needed_bytes {
        let frame = (payload.len() * 8).checked_div(per_frame).unwrap_or(0);
        return Err(Error::Corrupt(format!(
            "payload truncated at merged frame {frame} of {merged}"
        )));
    }
    if payload.len() as u128 > needed_bytes {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            payload.len() as u128 - needed_bytes
        )));
    }

    let mut r = BitReader::new(payload);
    let mut lengths = Vec::with_capacity(merged);
    let mut semantic = Vec::with_capacity(merged);
    let mut acoustic = vec![Vec::with_capacity(merged); n_q - 1];
    let sem_size = layout.fsq_codebook_size();
    for k in 0..merged {
        let truncated = || Error::Corrupt(format!("payload truncated at merged frame {k}"));
        let len = r.read(bits.len_bits).ok_or_else(truncated)? + 1;
        if len > layout.l_max as u64 {
            return Err(Error::Corrupt(format!(
                "merged frame {k}: length {len} exceeds l_max {}",
                layout.l_max
            )));
        }
        let sem = r.read(bits.sem_bits).ok_or_else(truncated)?;
        if sem >= sem_size {
            return Err(Error::Corrupt(format!(
                "merged frame {k}: semantic index {sem} >= {sem_size}"
            )));
        }
        lengths.push(len as usize);
        semantic.push(sem as u32);
        for layer in acoustic.iter_mut() {
            let idx = r.read(bits.ac_bits).ok_or_else(truncated)?;
            if idx >= layout.rvq_k as u64 {
                return Err(Error::Corrupt(format!(
                    "merged frame {k}: acoustic index {idx} >= {}",
                    layout.rvq_k
                )));
            }
            layer.push(idx as u32);
        }
    }
    let pad = r.remaining_bits() as u32;
    if pad > 0 && r.read(pad) != Some(0) {
        return Err(Error::Corrupt("nonzero padding bits after payload".into()));
    }
    let total: u64 = lengths.iter().map(|&l| l as u64).sum();
    if total != source_frames {
        return Err(Error::Corrupt(format!(
            "lengths sum to {total} but header declares {source_frames} source frames"
        )));
    }
    let stream = TokenStream::new(semantic, lengths, acoustic, n_q, rate, source_frames, layout)
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(Unpacked { stream, fingerprint })
}
