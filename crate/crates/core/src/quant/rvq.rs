//! Residual vector quantization with Lloyd-fitted codebooks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `layers.len()` codebooks of `k` codewords of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqCodebooks {
    k: usize,
    dim: usize,
    layers: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RvqCode {
    pub indices: Vec<u32>,
    pub approx: Vec<f32>,
    pub residual: Vec<f32>,
}

/// Diagnostics from fitting one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFit {
    /// Mean squared quantization error after each assignment step.
    pub objective: Vec<f64>,
    /// Mean squared residual left after this layer.
    pub residual_mse: f64,
    pub reseeded: usize,
}

impl RvqCodebooks {
    pub fn new(layers: Vec<Vec<f32>>, k: usize, dim: usize) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Config("RVQ needs k >= 1 and dim >= 1".into()));
        }
        if k > u32::MAX as usize {
            return Err(Error::Config("RVQ codebook too large".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.len() != k * dim {
                return Err(Error::Shape(format!(
                    "layer {i} has {} values, expected {}",
                    layer.len(),
                    k * dim
                )));
            }
            if layer.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("layer {i} has a non-finite codeword")));
            }
        }
        Ok(Self { k, dim, layers })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &[f32] {
        &self.layers[i]
    }

    pub fn codeword(&self, layer: usize, index: usize) -> &[f32] {
        &self.layers[layer][index * self.dim..(index + 1) * self.dim]
    }

    /// Nearest codeword of `layer` to `target`; ties go to the lowest index.
    fn nearest(&self, layer: usize, target: &[f64]) -> (usize, f64) {
        nearest_row(&self.layers[layer], self.dim, target)
    }
}

fn nearest_row(rows: &[f32], dim: usize, target: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let d: f64 = row
            .iter()
            .zip(target)
            .map(|(&c, &t)| {
                let e = t - c as f64;
                e * e
            })
            .sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn nearest_f64(rows: &[f64], dim: usize, target: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let d: f64 = row.iter().zip(target).map(|(&c, &t)| (t - c) * (t - c)).sum();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Greedy residual encoding through the first `n_layers` layers.
pub fn rvq_encode(cb: &RvqCodebooks, x: &[f32], n_layers: usize) -> Result<RvqCode> {
    if n_layers < 1 || n_layers > cb.num_layers() {
        return Err(Error::range(
            "RVQ layer count",
            n_layers as u64,
            format!("1..={}", cb.num_layers()),
        ));
    }
    if x.len() != cb.dim() {
        return Err(Error::Shape(format!(
            "frame has dimension {}, codebooks expect {}",
            x.len(),
            cb.dim()
        )));
    }
    let mut residual: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut approx = vec![0.0f64; cb.dim()];
    let mut indices = Vec::with_capacity(n_layers);
    for layer in 0..n_layers {
        let (idx, _) = cb.nearest(layer, &residual);
        for ((r, a), &c) in residual.iter_mut().zip(&mut approx).zip(cb.codeword(layer, idx)) {
            *a += c as f64;
            *r -= c as f64;
        }
        indices.push(idx as u32);
    }
    let approx: Vec<f32> = approx.into_iter().map(|v| v as f32).collect();
    let residual = x.iter().zip(&approx).map(|(&v, &a)| v - a).collect();
    Ok(RvqCode {
        indices,
        approx,
        residual,
    })
}

/// Sum of the indexed codewords, one index per layer starting at layer 0.
pub fn rvq_decode(cb: &RvqCodebooks, indices: &[u32]) -> Result<Vec<f32>> {
    if indices.len() > cb.num_layers() {
        return Err(Error::range(
            "RVQ layer count",
            indices.len() as u64,
            format!("0..={}", cb.num_layers()),
        ));
    }
    let mut acc = vec![0.0f64; cb.dim()];
    for (layer, &idx) in indices.iter().enumerate() {
        if idx as usize >= cb.k() {
            return Err(Error::range("RVQ index", idx as u64, format!("0..{}", cb.k())));
        }
        acc.iter_mut()
            .zip(cb.codeword(layer, idx as usize))
            .for_each(|(a, &c)| *a += c as f64);
    }
    Ok(acc.into_iter().map(|v| v as f32).collect())
}

/// Parallel nearest-centroid assignment. Returns per-point index and
/// squared distance.
fn assign(data: &[f64], dim: usize, centroids: &[f64]) -> (Vec<usize>, Vec<f64>) {
    data.par_chunks_exact(dim)
        .map(|p| nearest_f64(centroids, dim, p))
        .unzip()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn kmeans_plus_plus(data: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut min_d: Vec<f64> = data.par_chunks_exact(dim).map(|p| sq(p, point(first))).collect();
    for _ in 1..k {
        let total: f64 = min_d.iter().sum();
        let chosen = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in min_d.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target == total; take the last positive weight
            pick.unwrap_or_else(|| min_d.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let c = point(chosen).to_vec();
        min_d
            .par_iter_mut()
            .zip(data.par_chunks_exact(dim))
            .for_each(|(m, p)| *m = m.min(sq(p, &c)));
        centroids.extend_from_slice(&c);
    }
    centroids
}

/// Lloyd's algorithm from a k-means++ start. Empty clusters are reseeded to
/// the point farthest from its own centroid. Returns the centroids, final
/// assignment distances and the objective history.
fn lloyd(data: &[f64], dim: usize, k: usize, iters: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, LayerFit) {
    let n = data.len() / dim;
    let mut centroids = kmeans_plus_plus(data, dim, k, rng);
    let (mut labels, mut dists) = assign(data, dim, &centroids);
    let mut objective = vec![mean(&dists)];
    let mut reseeded = 0;

    for _ in 0..iters {
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (p, &c) in data.chunks_exact(dim).zip(&labels) {
            counts[c] += 1;
            sums[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(p)
                .for_each(|(s, &x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = counts[c] as f64;
                for (dst, &s) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s / inv;
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut own: Vec<f64> = data
                .chunks_exact(dim)
                .zip(&labels)
                .map(|(p, &c)| {
                    p.iter()
                        .zip(&centroids[c * dim..(c + 1) * dim])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum()
                })
                .collect();
            for c in empty {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| own[a].partial_cmp(&own[b]).unwrap().then(b.cmp(&a)));
                let Some(i) = far else { break };
                counts[labels[i]] -= 1;
                counts[c] = 1;
                labels[i] = c;
                own[i] = 0.0;
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
                reseeded += 1;
            }
        }
        let (new_labels, new_dists) = assign(data, dim, &centroids);
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        objective.push(mean(&dists));
        if !changed {
            break;
        }
    }
    (
        centroids,
        dists,
        LayerFit {
            objective,
            residual_mse: 0.0,
            reseeded,
        },
    )
}

/// Fits `num_layers` codebooks on `rows` (`dim`-dimensional frames). Layer
/// `i` is fitted on the residuals left by layers `0..i`.
pub fn rvq_fit_with_report(
    rows: &[f32],
    dim: usize,
    num_layers: usize,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<(RvqCodebooks, Vec<LayerFit>)> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::Shape("training rows do not match dimension".into()));
    }
    if k == 0 {
        return Err(Error::Config("RVQ codebook size must be >= 1".into()));
    }
    if iters == 0 {
        return Err(Error::Config("RVQ fitting needs at least one iteration".into()));
    }
    let n = rows.len() / dim;
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    let mut residual: Vec<f64> = rows.iter().map(|&v| v as f64).collect();
    let mut layers = Vec::with_capacity(num_layers);
    let mut reports = Vec::with_capacity(num_layers);
    for layer in 0..num_layers {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(layer as u64));
        let (centroids, _, mut report) = lloyd(&residual, dim, k, iters, &mut rng);
        let book: Vec<f32> = centroids.iter().map(|&c| c as f32).collect();
        // subtract the f32 codewords actually stored
        let book64: Vec<f64> = book.iter().map(|&c| c as f64).collect();
        residual.par_chunks_exact_mut(dim).for_each(|p| {
            let (idx, _) = nearest_f64(&book64, dim, p);
            p.iter_mut()
                .zip(&book64[idx * dim..(idx + 1) * dim])
                .for_each(|(x, c)| *x -= c);
        });
        report.residual_mse = residual.iter().map(|v| v * v).sum::<f64>() / n as f64;
        layers.push(book);
        reports.push(report);
    }
    Ok((RvqCodebooks::new(layers, k, dim)?, reports))
}

pub fn rvq_fit(rows: &[f32], dim: usize, num_layers: usize, k: usize, iters: usize, seed: u64) -> Result<RvqCodebooks> {
    rvq_fit_with_report(rows, dim, num_layers, k, iters, seed).map(|(cb, _)| cb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn toy() -> RvqCodebooks {
        RvqCodebooks::new(vec![vec![0.0, 10.0], vec![-1.0, 1.0]], 2, 1).unwrap()
    }

    #[test]
    fn toy_two_layer_matches_brute_force() {
        let x = 8.6f32;
        // brute force over all codeword pairs under the greedy rule
        let cb = toy();
        let mut best1 = (0, f64::INFINITY);
        for i in 0..2 {
            let d = (x as f64 - cb.codeword(0, i)[0] as f64).abs();
            if d < best1.1 {
                best1 = (i, d);
            }
        }
        let r1 = x as f64 - cb.codeword(0, best1.0)[0] as f64;
        let mut best2 = (0, f64::INFINITY);
        for j in 0..2 {
            let d = (r1 - cb.codeword(1, j)[0] as f64).abs();
            if d < best2.1 {
                best2 = (j, d);
            }
        }
        let code = rvq_encode(&cb, &[x], 2).unwrap();
        assert_eq!(code.indices, vec![best1.0 as u32, best2.0 as u32]);
        assert_eq!(code.indices, vec![1, 0]);
        assert_eq!(code.approx, vec![9.0]);
        assert!((code.residual[0] + 0.4).abs() < 1e-6);
    }

    #[test]
    fn exact_codeword_has_zero_residual() {
        let cb = toy();
        let code = rvq_encode(&cb, &[10.0], 1).unwrap();
        assert_eq!(code.indices, vec![1]);
        assert_eq!(code.residual, vec![0.0]);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let cb = RvqCodebooks::new(vec![vec![1.0, 2.0, 1.0, 2.0, 3.0, 4.0]], 3, 2).unwrap();
        assert_eq!(rvq_encode(&cb, &[1.0, 2.0], 1).unwrap().indices, vec![0]);
        // equidistant between codeword 0 and 2 in 1-D
        let cb = RvqCodebooks::new(vec![vec![-1.0, 5.0, 1.0]], 3, 1).unwrap();
        assert_eq!(rvq_encode(&cb, &[0.0], 1).unwrap().indices, vec![0]);
    }

    #[test]
    fn decode_edges_and_errors() {
        let cb = toy();
        assert_eq!(rvq_decode(&cb, &[]).unwrap(), vec![0.0]);
        assert_eq!(rvq_decode(&cb, &[1]).unwrap(), vec![10.0]);
        assert!(matches!(rvq_decode(&cb, &[2]), Err(Error::Range { .. })));
        assert!(matches!(rvq_encode(&cb, &[0.0], 0), Err(Error::Range { .. })));
        assert!(matches!(rvq_encode(&cb, &[0.0], 3), Err(Error::Range { .. })));
    }

    #[test]
    fn k_distinct_points_are_recovered() {
        let pts = [[0.0f32, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]];
        let mut rows = Vec::new();
        for rep in 0..3 {
            for p in &pts {
                rows.extend_from_slice(p);
            }
            let _ = rep;
        }
        let (cb, reports) = rvq_fit_with_report(&rows, 2, 1, 4, 20, 7).unwrap();
        let mut book: Vec<[f32; 2]> = cb.layer(0).chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        book.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = pts.to_vec();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(book, want);
        assert_eq!(reports[0].residual_mse, 0.0);
    }

    #[test]
    fn insufficient_data() {
        assert!(matches!(
            rvq_fit(&[0.0, 1.0, 2.0], 1, 1, 4, 5, 0),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn second_layer_reduces_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<f32> = (0..2000 * 3).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        let (_, reports) = rvq_fit_with_report(&rows, 3, 2, 16, 15, 1).unwrap();
        assert!(reports[1].residual_mse <= reports[0].residual_mse);
        for r in &reports {
            for w in r.objective.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", r.objective);
            }
        }
    }
}
