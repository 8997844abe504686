#![allow(dead_code)]

use dynrate::features::{synth_acoustic_companion, synth_random_walk};
use dynrate::quant::{fsq_fit, rvq_fit};
use dynrate::{CodecModel, FeatureSequence};

/// Semantic/acoustic random-walk pair.
pub fn walk_pair(t: usize, d: usize, step: f64, detail: f64, seed: u64) -> (FeatureSequence, FeatureSequence) {
    let s = synth_random_walk(t, d, step, seed);
    let a = synth_acoustic_companion(&s, detail, seed ^ 0xa5a5);
    (s, a)
}

/// Small codec fitted on unmerged training pairs.
pub fn fit_model(
    train: &[(FeatureSequence, FeatureSequence)],
    dims: usize,
    levels: u32,
    layers: usize,
    k: usize,
    seed: u64,
) -> CodecModel {
    let sem: Vec<FeatureSequence> = train.iter().map(|(s, _)| s.clone()).collect();
    let fsq = fsq_fit(&sem, dims, levels).unwrap();
    let mut residuals = Vec::new();
    for (s, a) in train {
        for (sf, af) in s.frames().zip(a.frames()) {
            let r = fsq.quantize(sf).recon;
            residuals.extend(af.iter().zip(r).map(|(&x, y)| x - y));
        }
    }
    let rvq = rvq_fit(&residuals, fsq.dim(), layers, k, 10, seed).unwrap();
    CodecModel::new(fsq, rvq).unwrap()
}

pub fn mse(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64
}
