//! Fixed-rate feature sequences, the FLXF file format, linear resampling and
//! seeded synthetic generators.
//!
//! FLXF layout (little-endian, no padding):
//!
//! ```text
//! "FLXF" | version u8 = 1 | kind u8 | d u32 | T u64 | rate_num u32 | rate_den u32 | T*d f32
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::FrameRate;

pub const FLXF_MAGIC: &[u8; 4] = b"FLXF";
pub const FLXF_VERSION: u8 = 1;
pub const FLXF_HEADER_LEN: usize = 4 + 1 + 1 + 4 + 8 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Semantic,
    Acoustic,
}

impl StreamKind {
    fn to_byte(self) -> u8 {
        match self {
            StreamKind::Semantic => 0,
            StreamKind::Acoustic => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(StreamKind::Semantic),
            1 => Ok(StreamKind::Acoustic),
            other => Err(Error::Format(format!("unknown stream kind {other}"))),
        }
    }
}

/// A `T x d` row-major matrix of feature frames sampled at a fixed rate.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    data: Vec<f32>,
    dim: usize,
    rate: FrameRate,
    kind: StreamKind,
    /// Free-form provenance note. Not persisted and ignored by equality.
    pub source_tag: String,
}

impl PartialEq for FeatureSequence {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.rate == other.rate
            && self.kind == other.kind
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl FeatureSequence {
    pub fn new(data: Vec<f32>, dim: usize, rate: FrameRate, kind: StreamKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSequence("feature dimension must be >= 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidSequence(format!(
                "{} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSequence(format!(
                "non-finite value at frame {}, dim {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self {
            data,
            dim,
            rate,
            kind,
            source_tag: String::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], rate: FrameRate, kind: StreamKind) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidSequence("ragged rows".into()));
        }
        Self::new(rows.concat(), dim, rate, kind)
    }

    /// An empty sequence that still carries its feature dimension.
    pub fn empty(dim: usize, rate: FrameRate, kind: StreamKind) -> Result<Self> {
        Self::new(Vec::new(), dim, rate, kind)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn with_kind(mut self, kind: StreamKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rate(&self) -> FrameRate {
        self.rate
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn duration_s(&self) -> f64 {
        self.rate.duration_of(self.len() as u64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FLXF_HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FLXF_MAGIC);
        out.push(FLXF_VERSION);
        out.push(self.kind.to_byte());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.rate.numer().to_le_bytes());
        out.extend_from_slice(&self.rate.denom().to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != FLXF_MAGIC {
            return Err(Error::Format("not an FLXF file (bad magic)".into()));
        }
        if bytes.len() < FLXF_HEADER_LEN {
            return Err(Error::Corrupt(format!(
                "FLXF header truncated: {} of {FLXF_HEADER_LEN} bytes",
                bytes.len()
            )));
        }
        if bytes[4] != FLXF_VERSION {
            return Err(Error::Format(format!("unsupported FLXF version {}", bytes[4])));
        }
        let kind = StreamKind::from_byte(bytes[5])?;
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let frames = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
        let num = u32::from_le_bytes(bytes[18..22].try_into().unwrap());
        let den = u32::from_le_bytes(bytes[22..26].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Format("FLXF dimension is zero".into()));
        }
        let rate = FrameRate::new(num, den).map_err(|e| Error::Format(e.to_string()))?;
        if rate.numer() != num || rate.denom() != den {
            return Err(Error::Format(format!("FLXF rate {num}/{den} is not reduced")));
        }
        let expected = (frames as u128) * (dim as u128) * 4;
        let payload = &bytes[FLXF_HEADER_LEN..];
        if (payload.len() as u128) < expected {
            return Err(Error::Corrupt(format!(
                "FLXF payload truncated: {} of {expected} bytes",
                payload.len()
            )));
        }
        if (payload.len() as u128) > expected {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes after FLXF payload",
                payload.len() as u128 - expected
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(data, dim, rate, kind).map_err(|e| Error::Corrupt(e.to_string()))
    }
}

pub fn save_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&seq.to_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    Ok(FeatureSequence::from_bytes(&bytes)?.with_tag(path.display().to_string()))
}

/// Rounds half away from zero (`f64::round` semantics), as an integer.
pub(crate) fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// Resamples to `target` by linear interpolation between the two bracketing
/// source frames. Output frame `i` sits at source position
/// `i * source_rate / target_rate`; positions past the last frame clamp to it.
pub fn resample_linear(seq: &FeatureSequence, target: FrameRate) -> Result<FeatureSequence> {
    if target == seq.rate() {
        return Ok(seq.clone());
    }
    let t = seq.len();
    if t < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: t });
    }
    let out_len = round_half_away(t as f64 * target.ratio_to(&seq.rate())).max(1) as usize;
    let step = seq.rate().ratio_to(&target);
    let dim = seq.dim();
    let last = (t - 1) as f64;
    let mut out = Vec::with_capacity(out_len * dim);
    for i in 0..out_len {
        let pos = (i as f64 * step).clamp(0.0, last);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(t - 1);
        let frac = pos - lo as f64;
        let (a, b) = (seq.frame(lo), seq.frame(hi));
        out.extend(
            a.iter()
                .zip(b)
                .map(|(&x, &y)| ((1.0 - frac) * x as f64 + frac * y as f64) as f32),
        );
    }
    Ok(FeatureSequence::new(out, dim, target, seq.kind())?.with_tag(seq.source_tag.clone()))
}

/// Base rate used by the synthetic generators: 12.5 Hz.
pub fn default_base_rate() -> FrameRate {
    FrameRate::new(25, 2).expect("constant rate")
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn cosine64(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    dot / (na * nb).sqrt()
}

/// A piecewise-constant sequence together with the segment layout and the
/// constant vector of each segment.
#[derive(Debug, Clone)]
pub struct PiecewiseFixture {
    pub sequence: FeatureSequence,
    pub segment_lengths: Vec<usize>,
    pub constants: Vec<Vec<f32>>,
}

/// Piecewise-constant sequence with the given segment lengths. Adjacent
/// segment constants are never parallel.
pub fn piecewise_constant_with_lengths(lengths: &[usize], d: usize, seed: u64) -> PiecewiseFixture {
    assert!(d >= 1, "dimension must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut constants: Vec<Vec<f32>> = Vec::with_capacity(lengths.len());
    let mut data = Vec::with_capacity(lengths.iter().sum::<usize>() * d);
    for &len in lengths {
        let c = loop {
            let c: Vec<f32> = gaussian_vec(&mut rng, d).into_iter().map(|x| x as f32).collect();
            if c.iter().all(|x| *x == 0.0) {
                continue;
            }
            let distinct = match constants.last() {
                None => true,
                Some(prev) => {
                    let p: Vec<f64> = prev.iter().map(|&x| x as f64).collect();
                    let q: Vec<f64> = c.iter().map(|&x| x as f64).collect();
                    // d == 1 only admits two directions, so alternate sign.
                    if d == 1 {
                        p[0] * q[0] < 0.0
                    } else {
                        cosine64(&p, &q) < 0.999
                    }
                }
            };
            if distinct {
                break c;
            }
        };
        for _ in 0..len {
            data.extend_from_slice(&c);
        }
        constants.push(c);
    }
    let sequence = FeatureSequence::new(data, d, default_base_rate(), StreamKind::Semantic)
        .expect("finite generator output")
        .with_tag(format!("piecewise-constant seed={seed}"));
    PiecewiseFixture {
        sequence,
        segment_lengths: lengths.to_vec(),
        constants,
    }
}

/// `num_segments` constant segments with lengths drawn uniformly from
/// `seg_len_range` (inclusive).
pub fn synth_piecewise_constant(
    num_segments: usize,
    seg_len_range: (usize, usize),
    d: usize,
    seed: u64,
) -> PiecewiseFixture {
    let (lo, hi) = seg_len_range;
    assert!(lo >= 1 && hi >= lo, "segment length range must satisfy 1 <= min <= max");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let lengths: Vec<usize> = (0..num_segments).map(|_| rng.random_range(lo..=hi)).collect();
    piecewise_constant_with_lengths(&lengths, d, seed)
}

/// Unit-norm random walk: `f[t+1] = normalize(f[t] + step_scale * noise)`.
pub fn synth_random_walk(t: usize, d: usize, step_scale: f64, seed: u64) -> FeatureSequence {
    assert!(t >= 1 && d >= 1, "random walk needs T >= 1 and d >= 1");
    assert!(step_scale > 0.0, "step_scale must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = gaussian_vec(&mut rng, d);
    normalize(&mut cur);
    let mut data = Vec::with_capacity(t * d);
    data.extend(cur.iter().map(|&x| x as f32));
    for _ in 1..t {
        let noise = gaussian_vec(&mut rng, d);
        cur.iter_mut().zip(&noise).for_each(|(c, n)| *c += step_scale * n);
        normalize(&mut cur);
        data.extend(cur.iter().map(|&x| x as f32));
    }
    FeatureSequence::new(data, d, default_base_rate(), StreamKind::Semantic)
        .expect("finite generator output")
        .with_tag(format!("random-walk seed={seed} step={step_scale}"))
}

/// Sequence with a planted event density: each frame is, with probability
/// `density`, an abrupt jump to a fresh random direction, and otherwise a
/// tiny drift from the previous frame.
pub fn synth_event_density(t: usize, d: usize, density: f64, seed: u64) -> FeatureSequence {
    assert!(t >= 1 && d >= 2, "event-density fixture needs T >= 1 and d >= 2");
    assert!((0.0..=1.0).contains(&density), "density must lie in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = gaussian_vec(&mut rng, d);
    normalize(&mut cur);
    let mut data = Vec::with_capacity(t * d);
    data.extend(cur.iter().map(|&x| x as f32));
    for _ in 1..t {
        let noise = gaussian_vec(&mut rng, d);
        if rng.random_bool(density) {
            cur = noise;
        } else {
            cur.iter_mut().zip(&noise).for_each(|(c, n)| *c += 0.01 * n);
        }
        normalize(&mut cur);
        data.extend(cur.iter().map(|&x| x as f32));
    }
    FeatureSequence::new(data, d, default_base_rate(), StreamKind::Semantic)
        .expect("finite generator output")
        .with_tag(format!("event-density seed={seed} density={density}"))
}

/// Acoustic companion for a semantic fixture: the semantic frames plus an
/// independent random-walk perturbation of magnitude `detail_scale`.
pub fn synth_acoustic_companion(semantic: &FeatureSequence, detail_scale: f64, seed: u64) -> FeatureSequence {
    let d = semantic.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut detail = vec![0.0f64; d];
    let mut data = Vec::with_capacity(semantic.as_slice().len());
    for frame in semantic.frames() {
        let noise = gaussian_vec(&mut rng, d);
        detail
            .iter_mut()
            .zip(&noise)
            .for_each(|(x, n)| *x = 0.7 * *x + detail_scale * n);
        data.extend(frame.iter().zip(&detail).map(|(&s, &x)| (s as f64 + x) as f32));
    }
    FeatureSequence::new(data, d, semantic.rate(), StreamKind::Acoustic)
        .expect("finite generator output")
        .with_tag(format!("acoustic companion seed={seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rate(s: &str) -> FrameRate {
        s.parse().unwrap()
    }

    #[test]
    fn one_by_one_file_size() {
        let seq = FeatureSequence::new(vec![42.0], 1, rate("12.5"), StreamKind::Semantic).unwrap();
        let bytes = seq.to_bytes();
        assert_eq!(bytes.len(), FLXF_HEADER_LEN + 4);
        assert_eq!(&bytes[18..22], &25u32.to_le_bytes());
        assert_eq!(&bytes[22..26], &2u32.to_le_bytes());
        assert_eq!(&bytes[FLXF_HEADER_LEN..], &42.0f32.to_le_bytes());
    }

    #[test]
    fn roundtrip_3x2_and_determinism() {
        let seq = FeatureSequence::new(
            vec![1.0, -2.0, 3.5, 0.25, -0.0, 7.0],
            2,
            rate("25/3"),
            StreamKind::Acoustic,
        )
        .unwrap();
        let bytes = seq.to_bytes();
        assert_eq!(bytes, seq.to_bytes());
        let back = FeatureSequence::from_bytes(&bytes).unwrap();
        assert_eq!(back, seq);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn empty_sequence_keeps_dim() {
        let seq = FeatureSequence::empty(7, rate("12.5"), StreamKind::Semantic).unwrap();
        let back = FeatureSequence::from_bytes(&seq.to_bytes()).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 7);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing() {
        let seq = FeatureSequence::new(vec![1.0, 2.0], 2, rate("12.5"), StreamKind::Semantic).unwrap();
        let mut bytes = seq.to_bytes();
        let mut bad = bytes.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(FeatureSequence::from_bytes(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(FeatureSequence::from_bytes(&bad), Err(Error::Format(_))));
        assert!(matches!(
            FeatureSequence::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Corrupt(_))
        ));
        assert!(matches!(
            FeatureSequence::from_bytes(&bytes[..10]),
            Err(Error::Corrupt(_))
        ));
        bytes.push(0);
        assert!(matches!(FeatureSequence::from_bytes(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureSequence::new(vec![f32::NAN], 1, rate("1"), StreamKind::Semantic).is_err());
    }

    #[test]
    fn resample_identity_and_constant() {
        let seq = synth_random_walk(10, 3, 0.2, 1);
        assert_eq!(resample_linear(&seq, seq.rate()).unwrap(), seq);

        let constant = FeatureSequence::new(vec![0.5; 40], 4, rate("50/3"), StreamKind::Semantic).unwrap();
        let out = resample_linear(&constant, rate("12.5")).unwrap();
        assert_eq!(out.len(), 8);
        assert!(out.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn resample_needs_two_frames() {
        let one = FeatureSequence::new(vec![1.0], 1, rate("50/3"), StreamKind::Semantic).unwrap();
        assert!(matches!(
            resample_linear(&one, rate("12.5")),
            Err(Error::InsufficientFrames { .. })
        ));
    }

    #[test]
    fn random_walk_is_unit_norm_and_deterministic() {
        let a = synth_random_walk(50, 6, 0.3, 9);
        assert_eq!(a, synth_random_walk(50, 6, 0.3, 9));
        for f in a.frames() {
            let n = f.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_segment_is_constant() {
        let fx = synth_piecewise_constant(1, (5, 5), 3, 4);
        let first = fx.sequence.frame(0).to_vec();
        assert!(fx.sequence.frames().all(|f| f == first.as_slice()));
        assert_eq!(fx.sequence, synth_piecewise_constant(1, (5, 5), 3, 4).sequence);
    }
}
