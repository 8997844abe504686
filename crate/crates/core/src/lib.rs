//! Dynamic-frame-rate audio token codec.
//!
//! A semantic feature stream decides where adjacent frames are redundant
//! (cosine similarity at or above a threshold `tau`). Those frames are merged
//! by averaging in both the semantic and the acoustic stream, the merged
//! semantic vectors are quantized with finite scalar quantization (FSQ), and
//! the acoustic residual with residual vector quantization (RVQ). Segment
//! lengths travel with the tokens so the decoder can restore the fixed rate.
//!
//! Modules:
//! - [`features`]: feature sequences, the FLXF file format, resampling, fixtures
//! - [`merge`]: similarity, merge planning, averaging, unmerging, refiners
//! - [`quant`]: FSQ and RVQ quantizers and their FLXQ persistence
//! - [`codec`]: the encode/decode pipeline and the FLXC bitstream
//! - [`analysis`]: frame-rate and bitrate accounting, sweeps, reports
//! - [`cli`]: the `dynrate` command-line front end

pub mod analysis;
pub mod cli;
pub mod codec;
pub mod error;
pub mod features;
pub mod merge;
pub mod quant;
pub mod rate;

pub use codec::{decode, encode, pack, unpack, BitLayout, EncodeOptions, TokenLayout, TokenStream};
pub use error::{Error, Result};
pub use features::{load_features, save_features, FeatureSequence, StreamKind};
pub use merge::{
    adjacent_similarity, apply_merge, plan_merge, unmerge, MergePlan, MergedSequence, RefineMode, Refiner,
};
pub use quant::{CodecModel, FsqCodec, RvqCodebooks};
pub use rate::FrameRate;
