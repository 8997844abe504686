//! Semantic FSQ and acoustic RVQ quantizers.

pub mod fsq;
pub mod model;
pub mod rvq;

pub use fsq::{bits_for, fsq_fit, fsq_index_decode, fsq_index_encode, FsqCode, FsqCodec};
pub use model::{fnv1a64, CodecModel};
pub use rvq::{rvq_decode, rvq_encode, rvq_fit, rvq_fit_with_report, LayerFit, RvqCode, RvqCodebooks};

use crate::error::{Error, Result};

/// Mean over frames of the squared L2 distance between two row-major
/// matrices of `dim`-dimensional vectors.
pub fn feat_alignment_distance(quantized: &[f32], reference: &[f32], dim: usize) -> Result<f64> {
    if dim == 0 || quantized.len() != reference.len() || !quantized.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "cannot compare {} and {} values at dimension {dim}",
            quantized.len(),
            reference.len()
        )));
    }
    let frames = quantized.len() / dim;
    if frames == 0 {
        return Ok(0.0);
    }
    let total: f64 = quantized
        .iter()
        .zip(reference)
        .map(|(&a, &b)| {
            let e = a as f64 - b as f64;
            e * e
        })
        .sum();
    Ok(total / frames as f64)
}
