//! Similarity-driven frame merging and length-driven unmerging.
//!
//! Adjacent frames of the semantic stream are compared by cosine similarity.
//! A left-to-right scan grows a segment while the link to the next frame has
//! similarity `>= tau` and the segment is shorter than `l_max`. Each segment is
//! replaced by the mean of its frames and its length is kept so the fixed-rate
//! sequence can be restored by repetition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSequence, StreamKind};
use crate::rate::FrameRate;

/// Default cap on merged segment length; `length - 1` fits in 3 bits.
pub const DEFAULT_L_MAX: usize = 8;

const ZERO_NORM: f64 = 1e-12;

/// Cosine similarity of two frames; 0 when either norm is below 1e-12.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na.sqrt() < ZERO_NORM || nb.sqrt() < ZERO_NORM {
        return 0.0;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// `s[t] = cos(e[t], e[t+1])` for `t in 0..T-1`.
pub fn adjacent_similarity(seq: &FeatureSequence) -> Vec<f64> {
    if seq.len() < 2 {
        return Vec::new();
    }
    (0..seq.len() - 1)
        .map(|t| cosine_similarity(seq.frame(t), seq.frame(t + 1)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergePlan {
    lengths: Vec<usize>,
    source_frame_count: usize,
    /// Threshold that produced the plan, when known.
    tau: Option<f64>,
    l_max: usize,
}

impl MergePlan {
    /// Builds a plan from explicit segment lengths.
    pub fn from_lengths(lengths: Vec<usize>, l_max: usize, tau: Option<f64>) -> Result<Self> {
        if l_max < 1 {
            return Err(Error::Config("l_max must be >= 1".into()));
        }
        if let Some(&bad) = lengths.iter().find(|&&l| l < 1 || l > l_max) {
            return Err(Error::range("segment length", bad as u64, format!("1..={l_max}")));
        }
        let source_frame_count = lengths.iter().sum();
        Ok(Self {
            lengths,
            source_frame_count,
            tau,
            l_max,
        })
    }

    /// One segment per frame.
    pub fn identity(frames: usize, l_max: usize) -> Result<Self> {
        Self::from_lengths(vec![1; frames], l_max, None)
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn source_frame_count(&self) -> usize {
        self.source_frame_count
    }

    pub fn merged_len(&self) -> usize {
        self.lengths.len()
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// `(start, end)` source-frame ranges, end exclusive.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lengths.iter().scan(0usize, |start, &len| {
            let s = *start;
            *start += len;
            Some((s, s + len))
        })
    }
}

/// Greedy left-to-right segmentation of `T = sims.len() + 1` frames.
///
/// `tau >= 1.0` disables merging entirely, even for identical frames.
pub fn plan_merge(sims: &[f64], tau: f64, l_max: usize) -> Result<MergePlan> {
    if l_max < 1 {
        return Err(Error::Config("l_max must be >= 1".into()));
    }
    if tau.is_nan() {
        return Err(Error::Config("tau must not be NaN".into()));
    }
    let frames = sims.len() + 1;
    if tau >= 1.0 {
        return MergePlan::from_lengths(vec![1; frames], l_max, Some(tau));
    }
    let mut lengths = Vec::new();
    let mut current = 1usize;
    for &s in sims {
        if s >= tau && current < l_max {
            current += 1;
        } else {
            lengths.push(current);
            current = 1;
        }
    }
    lengths.push(current);
    MergePlan::from_lengths(lengths, l_max, Some(tau))
}

/// Plans a merge for a whole sequence, including the empty one.
pub fn plan_for_sequence(seq: &FeatureSequence, tau: f64, l_max: usize) -> Result<MergePlan> {
    if seq.is_empty() {
        if l_max < 1 {
            return Err(Error::Config("l_max must be >= 1".into()));
        }
        return MergePlan::from_lengths(Vec::new(), l_max, Some(tau));
    }
    plan_merge(&adjacent_similarity(seq), tau, l_max)
}

/// Dynamic-rate sequence: one vector per merged segment.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedSequence {
    vectors: Vec<f32>,
    dim: usize,
    plan: MergePlan,
    base_rate: FrameRate,
    kind: StreamKind,
}

impl MergedSequence {
    pub fn new(vectors: Vec<f32>, dim: usize, plan: MergePlan, base_rate: FrameRate, kind: StreamKind) -> Result<Self> {
        if dim == 0 || vectors.len() != plan.merged_len() * dim {
            return Err(Error::Shape(format!(
                "{} values for {} merged frames of dimension {dim}",
                vectors.len(),
                plan.merged_len()
            )));
        }
        Ok(Self {
            vectors,
            dim,
            plan,
            base_rate,
            kind,
        })
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> &[f32] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.plan.merged_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plan(&self) -> &MergePlan {
        &self.plan
    }

    pub fn base_rate(&self) -> FrameRate {
        self.base_rate
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    /// Merged frames per second of source audio.
    pub fn average_frame_rate(&self) -> f64 {
        let duration = self.base_rate.duration_of(self.plan.source_frame_count() as u64);
        if duration == 0.0 {
            return 0.0;
        }
        self.len() as f64 / duration
    }

    pub fn refined(self, refiner: &dyn Refiner) -> Self {
        let vectors = refiner.refine(&self.vectors, self.dim);
        Self { vectors, ..self }
    }
}

/// Replaces every segment of `seq` by the mean of its frames.
pub fn apply_merge(seq: &FeatureSequence, plan: &MergePlan) -> Result<MergedSequence> {
    if plan.source_frame_count() != seq.len() {
        return Err(Error::PlanMismatch {
            plan: plan.source_frame_count(),
            seq: seq.len(),
        });
    }
    let dim = seq.dim();
    let mut vectors = Vec::with_capacity(plan.merged_len() * dim);
    let mut acc = vec![0.0f64; dim];
    for (start, end) in plan.spans() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for t in start..end {
            acc.iter_mut().zip(seq.frame(t)).for_each(|(a, &x)| *a += x as f64);
        }
        let n = (end - start) as f64;
        vectors.extend(acc.iter().map(|&a| (a / n) as f32));
    }
    MergedSequence::new(vectors, dim, plan.clone(), seq.rate(), seq.kind())
}

/// Repeats merged vector `k` `lengths[k]` times, restoring the base rate.
pub fn unmerge(merged: &MergedSequence) -> FeatureSequence {
    let dim = merged.dim();
    let mut data = Vec::with_capacity(merged.plan().source_frame_count() * dim);
    for (k, &len) in merged.plan().lengths().iter().enumerate() {
        let v = merged.vector(k);
        for _ in 0..len {
            data.extend_from_slice(v);
        }
    }
    FeatureSequence::new(data, dim, merged.base_rate(), merged.kind()).expect("merged vectors are finite")
}

/// Context refinement applied to a sequence of vectors of equal dimension.
///
/// Stands where a learned local-attention model would sit: implementations map
/// `rows.len() / dim` vectors to the same number of vectors.
pub trait Refiner: Send + Sync {
    fn refine(&self, rows: &[f32], dim: usize) -> Vec<f32>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RefineMode {
    #[default]
    Identity,
    /// Mean over `[k - window, k + window]`, clipped at the edges.
    WindowedMean { window: usize },
}

impl Refiner for RefineMode {
    fn refine(&self, rows: &[f32], dim: usize) -> Vec<f32> {
        match *self {
            RefineMode::Identity => rows.to_vec(),
            RefineMode::WindowedMean { window } => {
                let n = rows.len() / dim;
                let mut out = Vec::with_capacity(rows.len());
                let mut acc = vec![0.0f64; dim];
                for k in 0..n {
                    let lo = k.saturating_sub(window);
                    let hi = (k + window).min(n - 1);
                    acc.iter_mut().for_each(|a| *a = 0.0);
                    for row in rows[lo * dim..(hi + 1) * dim].chunks_exact(dim) {
                        acc.iter_mut().zip(row).for_each(|(a, &x)| *a += x as f64);
                    }
                    let count = (hi - lo + 1) as f64;
                    out.extend(acc.iter().map(|&a| (a / count) as f32));
                }
                out
            }
        }
    }
}

/// Applies `refiner` to a fixed-rate sequence.
pub fn refine_sequence(seq: &FeatureSequence, refiner: &dyn Refiner) -> FeatureSequence {
    let data = refiner.refine(seq.as_slice(), seq.dim());
    FeatureSequence::new(data, seq.dim(), seq.rate(), seq.kind())
        .expect("refiner output has the input shape")
        .with_tag(seq.source_tag.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{piecewise_constant_with_lengths, synth_piecewise_constant};

    fn seq(rows: &[Vec<f32>]) -> FeatureSequence {
        FeatureSequence::from_rows(rows, "12.5".parse().unwrap(), StreamKind::Semantic).unwrap()
    }

    #[test]
    fn similarity_basics() {
        assert_eq!(
            adjacent_similarity(&seq(&[vec![0.3, -2.0], vec![0.3, -2.0]])),
            vec![1.0]
        );
        assert_eq!(adjacent_similarity(&seq(&[vec![1.0, 0.0], vec![0.0, 1.0]])), vec![0.0]);
        assert_eq!(
            adjacent_similarity(&seq(&[vec![1.0, 0.0], vec![-1.0, 0.0]])),
            vec![-1.0]
        );
        assert!(adjacent_similarity(&seq(&[vec![1.0, 0.0]])).is_empty());
        // zero-norm frames force a boundary
        assert_eq!(adjacent_similarity(&seq(&[vec![0.0, 0.0], vec![0.0, 0.0]])), vec![0.0]);
    }

    #[test]
    fn boundary_pattern_of_two_segments() {
        let fx = piecewise_constant_with_lengths(&[2, 3], 4, 17);
        let s = adjacent_similarity(&fx.sequence);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], 1.0);
        assert!(s[1] > -1.0 && s[1] < 1.0);
        assert_eq!(&s[2..], &[1.0, 1.0]);
    }

    #[test]
    fn plan_examples() {
        let p = plan_merge(&[0.2, 0.3, 0.1], 0.9, 8).unwrap();
        assert_eq!(p.lengths(), &[1, 1, 1, 1]);
        let p = plan_merge(&[0.95, 0.95, 0.5], 0.9, 8).unwrap();
        assert_eq!(p.lengths(), &[3, 1]);
        let p = plan_merge(&[1.0; 11], 0.99, 8).unwrap();
        assert_eq!(p.lengths(), &[8, 4]);
        let p = plan_merge(&[1.0; 11], 1.0, 8).unwrap();
        assert_eq!(p.lengths(), &[1; 12]);
        // inclusive threshold
        assert_eq!(plan_merge(&[0.9], 0.9, 8).unwrap().lengths(), &[2]);
        assert!(matches!(plan_merge(&[0.5], 0.9, 0), Err(Error::Config(_))));
    }

    #[test]
    fn merge_and_unmerge_examples() {
        let x = seq(&[vec![0.0, 0.0], vec![2.0, 4.0]]);
        let m = apply_merge(&x, &MergePlan::from_lengths(vec![2], 8, None).unwrap()).unwrap();
        assert_eq!(m.vectors(), &[1.0, 2.0]);

        let id = apply_merge(&x, &MergePlan::identity(2, 8).unwrap()).unwrap();
        assert_eq!(id.vectors(), x.as_slice());
        assert_eq!(unmerge(&id), x);

        let bad = MergePlan::identity(3, 8).unwrap();
        assert!(matches!(apply_merge(&x, &bad), Err(Error::PlanMismatch { .. })));

        let plan = MergePlan::from_lengths(vec![2, 1, 3], 8, None).unwrap();
        let m = MergedSequence::new(
            vec![1.0, 2.0, 3.0],
            1,
            plan,
            "12.5".parse().unwrap(),
            StreamKind::Acoustic,
        )
        .unwrap();
        let u = unmerge(&m);
        assert_eq!(u.as_slice(), &[1.0, 1.0, 2.0, 3.0, 3.0, 3.0]);
        assert_eq!(u.rate(), "12.5".parse().unwrap());
    }

    #[test]
    fn merged_vectors_equal_segment_constants() {
        let fx = synth_piecewise_constant(20, (1, 8), 5, 3);
        let plan = MergePlan::from_lengths(fx.segment_lengths.clone(), 8, None).unwrap();
        let m = apply_merge(&fx.sequence, &plan).unwrap();
        for (k, c) in fx.constants.iter().enumerate() {
            assert_eq!(m.vector(k), c.as_slice());
        }
        assert_eq!(unmerge(&m), fx.sequence);
    }

    #[test]
    fn windowed_mean_oracle() {
        let rows = [1.0f32, 10.0, 2.0, 20.0, 4.0, 40.0];
        let out = RefineMode::WindowedMean { window: 1 }.refine(&rows, 2);
        let expect = [
            (1.0 + 2.0) / 2.0,
            (10.0 + 20.0) / 2.0,
            (1.0 + 2.0 + 4.0) / 3.0,
            (10.0 + 20.0 + 40.0) / 3.0,
            (2.0 + 4.0) / 2.0,
            (20.0 + 40.0) / 2.0,
        ];
        for (o, e) in out.iter().zip(expect) {
            assert!((*o as f64 - e).abs() < 1e-6);
        }
        assert_eq!(RefineMode::Identity.refine(&rows, 2), rows);
        let constant = [3.0f32; 12];
        assert_eq!(RefineMode::WindowedMean { window: 8 }.refine(&constant, 3), constant);
        assert!(RefineMode::WindowedMean { window: 2 }.refine(&[], 3).is_empty());
    }
}
