//! Finite scalar quantization of a low-rank projection.
//!
//! Frames are centred, projected onto `D` principal directions, mapped
//! affinely from `[lo_j, hi_j]` to `[0, L-1]`, rounded half away from zero and
//! clamped. The level tuple packs into one index `sum_j level_j * L^j`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::FeatureSequence;

/// Largest supported codebook, so indices fit a `u32`.
pub const MAX_FSQ_CODEBOOK: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct FsqCodec {
    dim: usize,
    dims: usize,
    levels: u32,
    mean: Vec<f32>,
    /// `dim x dims`, row-major.
    down: Vec<f32>,
    /// `dims x dim`, row-major.
    up: Vec<f32>,
    lo: Vec<f32>,
    hi: Vec<f32>,
}

/// Result of quantizing one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FsqCode {
    pub index: u32,
    pub levels: Vec<u32>,
    pub recon: Vec<f32>,
}

#[allow(clippy::too_many_arguments)]
impl FsqCodec {
    pub fn from_parts(
        dim: usize,
        dims: usize,
        levels: u32,
        mean: Vec<f32>,
        down: Vec<f32>,
        up: Vec<f32>,
        lo: Vec<f32>,
        hi: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 || dims == 0 {
            return Err(Error::Config("FSQ dimensions must be >= 1".into()));
        }
        if levels < 2 {
            return Err(Error::Config(format!("FSQ needs at least 2 levels, got {levels}")));
        }
        match (levels as u64).checked_pow(dims as u32) {
            Some(size) if size <= MAX_FSQ_CODEBOOK => {}
            _ => {
                return Err(Error::Config(format!(
                    "FSQ codebook {levels}^{dims} exceeds 2^32 entries"
                )))
            }
        }
        if mean.len() != dim || down.len() != dim * dims || up.len() != dim * dims {
            return Err(Error::Shape("FSQ projection sizes do not match dimensions".into()));
        }
        if lo.len() != dims || hi.len() != dims {
            return Err(Error::Shape("FSQ bounds must have one entry per low-rank dim".into()));
        }
        let finite = |v: &[f32]| v.iter().all(|x| x.is_finite());
        if !(finite(&mean) && finite(&down) && finite(&up) && finite(&lo) && finite(&hi)) {
            return Err(Error::Config("FSQ parameters must be finite".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(Error::Config("FSQ bounds need lo < hi in every dim".into()));
        }
        Ok(Self {
            dim,
            dims,
            levels,
            mean,
            down,
            up,
            lo,
            hi,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Low-rank dimension `D`.
    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Levels per dimension `L`.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn codebook_size(&self) -> u64 {
        (self.levels as u64).pow(self.dims as u32)
    }

    /// Bits needed for one index: `ceil(log2(L^D))`.
    pub fn index_bits(&self) -> u32 {
        bits_for(self.codebook_size())
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    pub fn down_proj(&self) -> &[f32] {
        &self.down
    }

    pub fn up_proj(&self) -> &[f32] {
        &self.up
    }

    pub fn lower_bounds(&self) -> &[f32] {
        &self.lo
    }

    pub fn upper_bounds(&self) -> &[f32] {
        &self.hi
    }

    /// Centred low-rank coordinates of `x`.
    pub fn project_down(&self, x: &[f32]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "frame dimension mismatch");
        let mut z = vec![0.0f64; self.dims];
        for (i, (&xi, &mi)) in x.iter().zip(&self.mean).enumerate() {
            let c = xi as f64 - mi as f64;
            let row = &self.down[i * self.dims..(i + 1) * self.dims];
            z.iter_mut().zip(row).for_each(|(zj, &w)| *zj += c * w as f64);
        }
        z
    }

    pub fn project_up(&self, z: &[f64]) -> Vec<f32> {
        assert_eq!(z.len(), self.dims, "low-rank dimension mismatch");
        let mut x: Vec<f64> = self.mean.iter().map(|&m| m as f64).collect();
        for (j, &zj) in z.iter().enumerate() {
            let row = &self.up[j * self.dim..(j + 1) * self.dim];
            x.iter_mut().zip(row).for_each(|(xi, &w)| *xi += zj * w as f64);
        }
        x.into_iter().map(|v| v as f32).collect()
    }

    /// Level of one low-rank coordinate.
    pub fn level_of(&self, j: usize, coord: f64) -> u32 {
        let (lo, hi) = (self.lo[j] as f64, self.hi[j] as f64);
        let top = (self.levels - 1) as f64;
        let u = (coord - lo) / (hi - lo) * top;
        // NaN clamps to 0 via the cast.
        (u.round().clamp(0.0, top)) as u32
    }

    /// Low-rank coordinate represented by a level.
    pub fn level_center(&self, j: usize, level: u32) -> f64 {
        let (lo, hi) = (self.lo[j] as f64, self.hi[j] as f64);
        lo + level as f64 / (self.levels - 1) as f64 * (hi - lo)
    }

    pub fn quantize(&self, x: &[f32]) -> FsqCode {
        let z = self.project_down(x);
        let levels: Vec<u32> = z.iter().enumerate().map(|(j, &c)| self.level_of(j, c)).collect();
        let index = fsq_index_encode(&levels, self.levels) as u32;
        let recon = self.reconstruct_levels(&levels);
        FsqCode { index, levels, recon }
    }

    pub fn reconstruct_levels(&self, levels: &[u32]) -> Vec<f32> {
        let centers: Vec<f64> = levels
            .iter()
            .enumerate()
            .map(|(j, &l)| self.level_center(j, l))
            .collect();
        self.project_up(&centers)
    }

    pub fn reconstruct(&self, index: u32) -> Result<Vec<f32>> {
        let levels = fsq_index_decode(index as u64, self.dims, self.levels)?;
        Ok(self.reconstruct_levels(&levels))
    }
}

/// `ceil(log2(n))`, with 0 bits for `n <= 1`.
pub fn bits_for(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

/// `sum_j levels[j] * L^j`, least-significant digit first.
pub fn fsq_index_encode(levels: &[u32], l: u32) -> u64 {
    levels
        .iter()
        .rev()
        .fold(0u64, |acc, &digit| acc * l as u64 + digit as u64)
}

/// Base-`L` digits of `index`, least-significant first.
pub fn fsq_index_decode(index: u64, dims: usize, l: u32) -> Result<Vec<u32>> {
    let size = (l as u64)
        .checked_pow(dims as u32)
        .ok_or_else(|| Error::Config(format!("codebook {l}^{dims} overflows")))?;
    if index >= size {
        return Err(Error::range("FSQ index", index, format!("0..{size}")));
    }
    let mut rest = index;
    Ok((0..dims)
        .map(|_| {
            let digit = (rest % l as u64) as u32;
            rest /= l as u64;
            digit
        })
        .collect())
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits projections by PCA of the mean-centred training frames and level
/// bounds from the 1st/99th percentiles of the projected coordinates.
pub fn fsq_fit(train: &[FeatureSequence], dims: usize, levels: u32) -> Result<FsqCodec> {
    let dim = train
        .first()
        .map(FeatureSequence::dim)
        .ok_or_else(|| Error::Fit("no training sequences".into()))?;
    if train.iter().any(|s| s.dim() != dim) {
        return Err(Error::Fit("training sequences disagree on dimension".into()));
    }
    if dims == 0 || dims > dim {
        return Err(Error::Fit(format!("low-rank dimension {dims} must lie in 1..={dim}")));
    }
    if levels < 2 {
        return Err(Error::Fit(format!("FSQ needs at least 2 levels, got {levels}")));
    }
    let n: usize = train.iter().map(FeatureSequence::len).sum();
    if n < dims {
        return Err(Error::InsufficientData { needed: dims, got: n });
    }

    let mut mean = vec![0.0f64; dim];
    for f in train.iter().flat_map(|s| s.frames()) {
        mean.iter_mut().zip(f).for_each(|(m, &x)| *m += x as f64);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mean32: Vec<f32> = mean.iter().map(|&m| m as f32).collect();

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut c = vec![0.0f64; dim];
    for f in train.iter().flat_map(|s| s.frames()) {
        c.iter_mut()
            .zip(f.iter().zip(&mean32))
            .for_each(|(ci, (&x, &m))| *ci = x as f64 - m as f64);
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[order[0]];
    let weakest = eig.eigenvalues[order[dims - 1]];
    if top <= 0.0 || weakest <= top * 1e-10 {
        return Err(Error::Fit(format!(
            "training data has rank < {dims} (eigenvalue {weakest:e} vs {top:e})"
        )));
    }

    let mut down = vec![0.0f32; dim * dims];
    for (j, &col) in order[..dims].iter().enumerate() {
        let v = eig.eigenvectors.column(col);
        // deterministic sign: largest-magnitude component positive
        let pivot = (0..dim)
            .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap().then(b.cmp(&a)))
            .unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            down[i * dims + j] = (sign * v[i]) as f32;
        }
    }

    let u = DMatrix::from_row_slice(dim, dims, &down.iter().map(|&w| w as f64).collect::<Vec<_>>());
    let gram = u.transpose() * &u;
    let up_mat = gram
        .try_inverse()
        .ok_or_else(|| Error::Fit("projection is singular".into()))?
        * u.transpose();
    let up: Vec<f32> = (0..dims)
        .flat_map(|j| (0..dim).map(move |i| (j, i)))
        .map(|(j, i)| up_mat[(j, i)] as f32)
        .collect();

    let mut codec = FsqCodec {
        dim,
        dims,
        levels,
        mean: mean32,
        down,
        up,
        lo: vec![-1.0; dims],
        hi: vec![1.0; dims],
    };

    let mut coords: Vec<Vec<f64>> = vec![Vec::with_capacity(n); dims];
    for f in train.iter().flat_map(|s| s.frames()) {
        for (j, z) in codec.project_down(f).into_iter().enumerate() {
            coords[j].push(z);
        }
    }
    for (j, col) in coords.iter_mut().enumerate() {
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut lo = percentile(col, 0.01) as f32;
        let mut hi = percentile(col, 0.99) as f32;
        if hi - lo <= 1e-6 * (1.0 + lo.abs().max(hi.abs())) {
            let pad = 1e-3 * (1.0 + lo.abs().max(hi.abs()));
            lo -= pad;
            hi += pad;
        }
        codec.lo[j] = lo;
        codec.hi[j] = hi;
    }
    Ok(codec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{synth_random_walk, StreamKind};

    fn unit_codec(levels: u32) -> FsqCodec {
        // identity projection on 2 dims, bounds [-1, 1]
        FsqCodec::from_parts(
            2,
            2,
            levels,
            vec![0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn index_extremes() {
        assert_eq!(fsq_index_encode(&[7; 5], 8), 32767);
        assert_eq!(fsq_index_encode(&[0; 5], 8), 0);
        assert_eq!(fsq_index_decode(0, 5, 8).unwrap(), vec![0; 5]);
        assert_eq!(fsq_index_decode(32767, 5, 8).unwrap(), vec![7; 5]);
        assert_eq!(fsq_index_decode(1, 3, 8).unwrap(), vec![1, 0, 0]);
        assert!(matches!(fsq_index_decode(32768, 5, 8), Err(Error::Range { .. })));
    }

    #[test]
    fn midpoint_rounds_away_from_zero() {
        let codec = unit_codec(8);
        // scalar oracle: 3.5 rounds to 4 under half-away-from-zero
        assert_eq!(3.5f64.round(), 4.0);
        let code = codec.quantize(&[0.0, 0.0]);
        assert_eq!(code.levels, vec![4, 4]);
        assert_eq!(code.index, 4 + 4 * 8);
    }

    #[test]
    fn clamps_out_of_range() {
        let codec = unit_codec(8);
        let code = codec.quantize(&[-50.0, 50.0]);
        assert_eq!(code.levels, vec![0, 7]);
    }

    #[test]
    fn codebook_size_and_bits() {
        let seqs = vec![synth_random_walk(200, 8, 0.5, 2)];
        let codec = fsq_fit(&seqs, 5, 8).unwrap();
        assert_eq!(codec.codebook_size(), 32768);
        assert_eq!(codec.index_bits(), 15);
        assert_eq!(bits_for(4096), 12);
        assert_eq!(bits_for(8), 3);
        assert_eq!(bits_for(1), 0);
        assert_eq!(bits_for(5), 3);
    }

    #[test]
    fn fit_is_deterministic() {
        let seqs = vec![synth_random_walk(300, 6, 0.4, 5)];
        assert_eq!(fsq_fit(&seqs, 3, 8).unwrap(), fsq_fit(&seqs, 3, 8).unwrap());
    }

    #[test]
    fn fit_rejects_degenerate_data() {
        let constant = FeatureSequence::new(vec![1.0; 40], 4, "12.5".parse().unwrap(), StreamKind::Semantic).unwrap();
        assert!(matches!(fsq_fit(&[constant], 2, 8), Err(Error::Fit(_))));
        let short = synth_random_walk(2, 6, 0.4, 5);
        assert!(matches!(fsq_fit(&[short], 3, 8), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn reconstruction_requantizes_to_same_index() {
        let seqs = vec![synth_random_walk(500, 8, 0.5, 11)];
        let codec = fsq_fit(&seqs, 5, 8).unwrap();
        for f in seqs[0].frames().take(100) {
            let code = codec.quantize(f);
            assert_eq!(codec.quantize(&code.recon).index, code.index);
            assert_eq!(codec.reconstruct(code.index).unwrap(), code.recon);
        }
    }
}
