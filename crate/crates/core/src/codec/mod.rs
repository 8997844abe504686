//! Dual-stream encode/decode pipeline and the token stream it produces.
//!
//! Encoding plans a merge on the semantic stream, applies the same plan to
//! both streams, quantizes each merged semantic vector with FSQ and the
//! acoustic residual (merged acoustic minus the FSQ reconstruction) with the
//! first `n_q - 1` RVQ layers.

mod bits;
pub mod bitstream;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bitstream::{pack, unpack, Unpacked, FLXC_HEADER_LEN, FLXC_MAGIC, FLXC_VERSION};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, StreamKind};
use crate::merge::{
    apply_merge, plan_for_sequence, unmerge, MergePlan, MergedSequence, RefineMode, Refiner, DEFAULT_L_MAX,
};
use crate::quant::{bits_for, rvq_decode, rvq_encode, CodecModel};
use crate::rate::FrameRate;

/// Bits spent on each field of one merged frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub len_bits: u32,
    pub sem_bits: u32,
    pub ac_bits: u32,
}

impl BitLayout {
    /// 3 length bits, 15 semantic bits (8^5 FSQ) and 12 bits per acoustic
    /// layer (4096 codewords).
    pub const REFERENCE: BitLayout = BitLayout {
        len_bits: 3,
        sem_bits: 15,
        ac_bits: 12,
    };

    pub fn frame_bits(&self, n_q: usize) -> u64 {
        self.len_bits as u64 + self.sem_bits as u64 + (n_q.saturating_sub(1)) as u64 * self.ac_bits as u64
    }

    pub fn semantic_frame_bits(&self) -> u64 {
        self.len_bits as u64 + self.sem_bits as u64
    }
}

/// Quantizer shape parameters that fix the index ranges of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub fsq_dims: u32,
    pub fsq_levels: u32,
    pub rvq_k: u32,
    pub l_max: u32,
}

impl TokenLayout {
    pub fn for_model(model: &CodecModel, l_max: usize) -> Self {
        Self {
            fsq_dims: model.fsq.dims() as u32,
            fsq_levels: model.fsq.levels(),
            rvq_k: model.rvq.k() as u32,
            l_max: l_max as u32,
        }
    }

    pub fn fsq_codebook_size(&self) -> u64 {
        (self.fsq_levels as u64).pow(self.fsq_dims)
    }

    pub fn bit_layout(&self) -> BitLayout {
        BitLayout {
            len_bits: bits_for(self.l_max as u64),
            sem_bits: bits_for(self.fsq_codebook_size()),
            ac_bits: bits_for(self.rvq_k as u64),
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.fsq_dims == 0 || self.fsq_levels < 2 {
            return Err(Error::Config("FSQ layout needs D >= 1 and L >= 2".into()));
        }
        match (self.fsq_levels as u64).checked_pow(self.fsq_dims) {
            Some(n) if n <= 1 << 32 => {}
            _ => return Err(Error::Config("FSQ codebook exceeds 2^32 entries".into())),
        }
        if self.rvq_k == 0 || self.l_max == 0 {
            return Err(Error::Config("layout needs K >= 1 and l_max >= 1".into()));
        }
        Ok(())
    }
}

/// Discrete tokens for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStream {
    semantic_indices: Vec<u32>,
    lengths: Vec<usize>,
    /// One row per acoustic layer, each of merged length.
    acoustic_indices: Vec<Vec<u32>>,
    n_q: usize,
    base_rate: FrameRate,
    source_frame_count: u64,
    layout: TokenLayout,
}

impl TokenStream {
    pub fn new(
        semantic_indices: Vec<u32>,
        lengths: Vec<usize>,
        acoustic_indices: Vec<Vec<u32>>,
        n_q: usize,
        base_rate: FrameRate,
        source_frame_count: u64,
        layout: TokenLayout,
    ) -> Result<Self> {
        let ts = Self {
            semantic_indices,
            lengths,
            acoustic_indices,
            n_q,
            base_rate,
            source_frame_count,
            layout,
        };
        ts.validate()?;
        Ok(ts)
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.check()?;
        if self.n_q < 1 {
            return Err(Error::Config("n_q must be >= 1".into()));
        }
        let t_hat = self.lengths.len();
        if self.semantic_indices.len() != t_hat {
            return Err(Error::Shape(format!(
                "{} semantic indices for {t_hat} merged frames",
                self.semantic_indices.len()
            )));
        }
        if self.acoustic_indices.len() != self.n_q - 1 {
            return Err(Error::Shape(format!(
                "{} acoustic layers for n_q = {}",
                self.acoustic_indices.len(),
                self.n_q
            )));
        }
        if let Some(row) = self.acoustic_indices.iter().find(|r| r.len() != t_hat) {
            return Err(Error::Shape(format!(
                "acoustic layer has {} indices for {t_hat} merged frames",
                row.len()
            )));
        }
        if let Some(&l) = self.lengths.iter().find(|&&l| l < 1 || l > self.layout.l_max as usize) {
            return Err(Error::range(
                "segment length",
                l as u64,
                format!("1..={}", self.layout.l_max),
            ));
        }
        let total: u64 = self.lengths.iter().map(|&l| l as u64).sum();
        if total != self.source_frame_count {
            return Err(Error::Shape(format!(
                "lengths sum to {total}, source has {} frames",
                self.source_frame_count
            )));
        }
        let sem_size = self.layout.fsq_codebook_size();
        if let Some(&q) = self.semantic_indices.iter().find(|&&q| q as u64 >= sem_size) {
            return Err(Error::range("semantic index", q as u64, format!("0..{sem_size}")));
        }
        let k = self.layout.rvq_k;
        if let Some(&q) = self.acoustic_indices.iter().flatten().find(|&&q| q >= k) {
            return Err(Error::range("acoustic index", q as u64, format!("0..{k}")));
        }
        Ok(())
    }

    pub fn semantic_indices(&self) -> &[u32] {
        &self.semantic_indices
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn acoustic_indices(&self) -> &[Vec<u32>] {
        &self.acoustic_indices
    }

    pub fn n_q(&self) -> usize {
        self.n_q
    }

    pub fn base_rate(&self) -> FrameRate {
        self.base_rate
    }

    pub fn source_frame_count(&self) -> u64 {
        self.source_frame_count
    }

    pub fn layout(&self) -> TokenLayout {
        self.layout
    }

    /// Merged frame count `T_hat`.
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.base_rate.duration_of(self.source_frame_count)
    }

    /// Payload size in bits, excluding header and padding.
    pub fn payload_bits(&self) -> u64 {
        self.len() as u64 * self.layout.bit_layout().frame_bits(self.n_q)
    }

    pub fn plan(&self) -> Result<MergePlan> {
        MergePlan::from_lengths(self.lengths.clone(), self.layout.l_max as usize, None)
    }

    /// Keeps only the first `n_q` quantizer layers.
    pub fn truncated(&self, n_q: usize) -> Result<Self> {
        if n_q < 1 || n_q > self.n_q {
            return Err(Error::range("n_q", n_q as u64, format!("1..={}", self.n_q)));
        }
        let mut out = self.clone();
        out.acoustic_indices.truncate(n_q - 1);
        out.n_q = n_q;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub tau: f64,
    pub n_q: usize,
    pub l_max: usize,
    pub refiner: RefineMode,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            tau: 1.0,
            n_q: 8,
            l_max: DEFAULT_L_MAX,
            refiner: RefineMode::Identity,
        }
    }
}

/// Encoder output kept alongside the tokens for diagnostics.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub stream: TokenStream,
    pub merged_semantic: MergedSequence,
    pub merged_acoustic: MergedSequence,
}

fn check_inputs(semantic: &FeatureSequence, acoustic: &FeatureSequence, model: &CodecModel) -> Result<()> {
    if semantic.kind() != StreamKind::Semantic {
        return Err(Error::Alignment("first stream is not tagged semantic".into()));
    }
    if acoustic.kind() != StreamKind::Acoustic {
        return Err(Error::Alignment("second stream is not tagged acoustic".into()));
    }
    if semantic.len() != acoustic.len() {
        return Err(Error::Alignment(format!(
            "semantic has {} frames, acoustic has {}",
            semantic.len(),
            acoustic.len()
        )));
    }
    if semantic.rate() != acoustic.rate() {
        return Err(Error::Alignment(format!(
            "semantic rate {} Hz differs from acoustic rate {} Hz",
            semantic.rate(),
            acoustic.rate()
        )));
    }
    if semantic.dim() != model.dim() || acoustic.dim() != model.dim() {
        return Err(Error::Alignment(format!(
            "feature dims {}/{} do not match codec dim {}",
            semantic.dim(),
            acoustic.dim(),
            model.dim()
        )));
    }
    Ok(())
}

pub fn encode_with_trace(
    semantic: &FeatureSequence,
    acoustic: &FeatureSequence,
    model: &CodecModel,
    opts: &EncodeOptions,
) -> Result<EncodeTrace> {
    check_inputs(semantic, acoustic, model)?;
    if opts.n_q < 1 {
        return Err(Error::Config("n_q must be >= 1".into()));
    }
    if opts.n_q - 1 > model.rvq.num_layers() {
        return Err(Error::range(
            "acoustic layer count",
            (opts.n_q - 1) as u64,
            format!("0..={}", model.rvq.num_layers()),
        ));
    }
    let plan = plan_for_sequence(semantic, opts.tau, opts.l_max)?;
    let merged_semantic = apply_merge(semantic, &plan)?.refined(&opts.refiner);
    let merged_acoustic = apply_merge(acoustic, &plan)?.refined(&opts.refiner);

    let dim = model.dim();
    let acoustic_layers = opts.n_q - 1;
    let per_frame: Vec<(u32, Vec<u32>)> = (0..plan.merged_len())
        .into_par_iter()
        .map(|k| {
            let code = model.fsq.quantize(merged_semantic.vector(k));
            if acoustic_layers == 0 {
                return Ok((code.index, Vec::new()));
            }
            let residual: Vec<f32> = merged_acoustic
                .vector(k)
                .iter()
                .zip(&code.recon)
                .map(|(&a, &s)| a - s)
                .collect();
            let rvq = rvq_encode(&model.rvq, &residual, acoustic_layers)?;
            Ok((code.index, rvq.indices))
        })
        .collect::<Result<_>>()?;

    let mut semantic_indices = Vec::with_capacity(per_frame.len());
    let mut acoustic_indices = vec![Vec::with_capacity(per_frame.len()); acoustic_layers];
    for (sem, ac) in per_frame {
        semantic_indices.push(sem);
        for (row, idx) in acoustic_indices.iter_mut().zip(ac) {
            row.push(idx);
        }
    }
    debug_assert_eq!(dim, merged_semantic.dim());
    let stream = TokenStream::new(
        semantic_indices,
        plan.lengths().to_vec(),
        acoustic_indices,
        opts.n_q,
        semantic.rate(),
        semantic.len() as u64,
        TokenLayout::for_model(model, opts.l_max),
    )?;
    Ok(EncodeTrace {
        stream,
        merged_semantic,
        merged_acoustic,
    })
}

pub fn encode(
    semantic: &FeatureSequence,
    acoustic: &FeatureSequence,
    model: &CodecModel,
    opts: &EncodeOptions,
) -> Result<TokenStream> {
    encode_with_trace(semantic, acoustic, model, opts).map(|t| t.stream)
}

/// Per merged frame: FSQ reconstruction plus the summed RVQ codewords.
pub fn decode_merged(ts: &TokenStream, model: &CodecModel) -> Result<MergedSequence> {
    let layout = ts.layout();
    if layout.fsq_dims as usize != model.fsq.dims()
        || layout.fsq_levels != model.fsq.levels()
        || layout.rvq_k as usize != model.rvq.k()
    {
        return Err(Error::Alignment(format!(
            "stream layout D={} L={} K={} does not match codec D={} L={} K={}",
            layout.fsq_dims,
            layout.fsq_levels,
            layout.rvq_k,
            model.fsq.dims(),
            model.fsq.levels(),
            model.rvq.k()
        )));
    }
    if ts.n_q() - 1 > model.rvq.num_layers() {
        return Err(Error::range(
            "acoustic layer count",
            (ts.n_q() - 1) as u64,
            format!("0..={}", model.rvq.num_layers()),
        ));
    }
    let dim = model.dim();
    let rows: Vec<Vec<f32>> = (0..ts.len())
        .into_par_iter()
        .map(|k| {
            let mut v = model.fsq.reconstruct(ts.semantic_indices()[k])?;
            if ts.n_q() > 1 {
                let idx: Vec<u32> = ts.acoustic_indices().iter().map(|row| row[k]).collect();
                let ac = rvq_decode(&model.rvq, &idx)?;
                v.iter_mut().zip(ac).for_each(|(s, a)| *s += a);
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    MergedSequence::new(rows.concat(), dim, ts.plan()?, ts.base_rate(), StreamKind::Acoustic)
}

/// Reconstructs fixed-rate features: dequantize, unmerge by lengths, refine.
pub fn decode(ts: &TokenStream, model: &CodecModel, refiner: &dyn Refiner) -> Result<FeatureSequence> {
    let merged = decode_merged(ts, model)?;
    let seq = unmerge(&merged);
    let data = refiner.refine(seq.as_slice(), seq.dim());
    FeatureSequence::new(data, seq.dim(), seq.rate(), StreamKind::Acoustic)
}

/// Unpacks FLXC bytes, checks the codec fingerprint and decodes.
pub fn decode_bitstream(bytes: &[u8], model: &CodecModel, refiner: &dyn Refiner) -> Result<FeatureSequence> {
    let unpacked = unpack(bytes)?;
    let actual = model.fingerprint();
    if unpacked.fingerprint != actual {
        return Err(Error::CodecMismatch {
            expected: unpacked.fingerprint,
            actual,
        });
    }
    decode(&unpacked.stream, model, refiner)
}

pub fn encode_to_bitstream(
    semantic: &FeatureSequence,
    acoustic: &FeatureSequence,
    model: &CodecModel,
    opts: &EncodeOptions,
) -> Result<Vec<u8>> {
    pack(&encode(semantic, acoustic, model, opts)?, model.fingerprint())
}
