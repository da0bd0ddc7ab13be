//! Segmentation heads on the embedding sequence: checkerboard-kernel novelty
//! on the self-similarity matrix, and greedy kernel segmentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::changepoint::{BoundaryCandidate, Head};
use crate::exec::Exec;
use crate::novelty::mad_z;
use crate::stats::{self, EPS};

#[derive(Debug, Error, PartialEq)]
pub enum EmbsegError {
    #[error("segment [{a}, {b}] out of range for {size} grid points")]
    OutOfRange { a: usize, b: usize, size: usize },
}

/// Embeddings averaged into ~1 s bins and unit-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingGrid {
    pub times: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Bins whose mean vector vanished (zero-guarded).
    pub degenerate: Vec<bool>,
}

impl EmbeddingGrid {
    pub fn from_unit_vectors(times: Vec<f64>, vectors: Vec<Vec<f64>>) -> Self {
        let degenerate = vec![false; vectors.len()];
        Self { times, vectors, degenerate }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Mean spacing between grid points, never below one second.
    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            return 1.0;
        }
        let span = self.times[self.times.len() - 1] - self.times[0];
        (span / (self.times.len() - 1) as f64).max(1.0)
    }
}

pub const GRID_SECONDS: f64 = 1.0;

/// Average raw embeddings into 1 s bins anchored at the first timestamp.
/// Empty bins are skipped; a bin's time is the mean of its members' times.
pub fn resample_embeddings(times: &[f64], embeddings: &[Vec<f64>]) -> EmbeddingGrid {
    assert_eq!(times.len(), embeddings.len());
    let mut grid = EmbeddingGrid {
        times: Vec::new(),
        vectors: Vec::new(),
        degenerate: Vec::new(),
    };
    if times.is_empty() {
        return grid;
    }
    let origin = times[0];
    let mut r = 0;
    while r < times.len() {
        let bin = ((times[r] - origin) / GRID_SECONDS).floor();
        let mut end = r;
        while end < times.len() && ((times[end] - origin) / GRID_SECONDS).floor() == bin {
            end += 1;
        }
        let members = &embeddings[r..end];
        let dim = members[0].len();
        let mut mean = vec![0.0; dim];
        for e in members {
            for (m, x) in mean.iter_mut().zip(e) {
                *m += x / members.len() as f64;
            }
        }
        let degenerate = stats::norm(&mean) <= EPS;
        grid.vectors.push(if degenerate { vec![0.0; dim] } else { stats::unit(&mean) });
        grid.degenerate.push(degenerate);
        grid.times.push(stats::mean(&times[r..end]));
        r = end;
    }
    grid
}

/// Gram matrix of the grid vectors with a summed-area table.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    size: usize,
    entries: Vec<f64>,
    integral: Vec<f64>,
}

impl GramMatrix {
    pub fn new(vectors: &[Vec<f64>], exec: Exec) -> Self {
        let q = vectors.len();
        let rows: Vec<Vec<f64>> =
            exec.map(vectors, |a| vectors.iter().map(|b| stats::dot(a, b)).collect());
        let entries: Vec<f64> = rows.into_iter().flatten().collect();
        let side = q + 1;
        let mut integral = vec![0.0; side * side];
        for p in 0..q {
            let mut row_sum = 0.0;
            for c in 0..q {
                row_sum += entries[p * q + c];
                integral[(p + 1) * side + c + 1] = integral[p * side + c + 1] + row_sum;
            }
        }
        Self { size: q, entries, integral }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.entries[p * self.size + q]
    }

    /// Sum of `G[p][q]` over `p, q ∈ [a, b]`.
    pub fn block_sum(&self, a: usize, b: usize) -> f64 {
        let side = self.size + 1;
        let at = |r: usize, c: usize| self.integral[r * side + c];
        at(b + 1, b + 1) - at(a, b + 1) - at(b + 1, a) + at(a, a)
    }

    /// `C(a, b) = −(Σ_{p,q∈[a,b]} G_pq) / (b − a + 1)²`.
    pub fn kts_cost(&self, a: usize, b: usize) -> Result<f64, EmbsegError> {
        if a > b || b >= self.size {
            return Err(EmbsegError::OutOfRange { a, b, size: self.size });
        }
        let len = (b - a + 1) as f64;
        Ok(-self.block_sum(a, b) / (len * len))
    }

    fn cost(&self, a: usize, b: usize) -> f64 {
        let len = (b - a + 1) as f64;
        -self.block_sum(a, b) / (len * len)
    }
}

/// Best split `k` of `[a, b]` (children `[a, k]` and `[k+1, b]`, each at
/// least `min_bins` long) and its gain; ties go to the smallest `k`.
pub fn best_split(
    gram: &GramMatrix,
    a: usize,
    b: usize,
    penalty: f64,
    min_bins: usize,
) -> Option<(usize, f64)> {
    let m = min_bins.max(1);
    if b + 1 < a + 2 * m {
        return None;
    }
    let whole = gram.cost(a, b);
    let mut best: Option<(usize, f64)> = None;
    for k in (a + m - 1)..=(b - m) {
        let gain = whole - (gram.cost(a, k) + gram.cost(k + 1, b)) - penalty;
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((k, gain));
        }
    }
    best
}

/// Greedy recursive splitting from the full interval; a split happens only
/// when its gain is positive. Cut times sit midway between grid points `k`
/// and `k + 1`; strength is the gain.
pub fn kts_segment(
    gram: &GramMatrix,
    times: &[f64],
    penalty: f64,
    min_bins: usize,
) -> Vec<BoundaryCandidate> {
    let mut out = Vec::new();
    if gram.size() == 0 {
        return out;
    }
    let mut stack = vec![(0usize, gram.size() - 1)];
    while let Some((a, b)) = stack.pop() {
        if let Some((k, gain)) = best_split(gram, a, b, penalty, min_bins) {
            if gain > 0.0 {
                out.push(BoundaryCandidate::new((times[k] + times[k + 1]) / 2.0, gain, Head::Kts));
                stack.push((k + 1, b));
                stack.push((a, k));
            }
        }
    }
    out.sort_by(|x, y| x.time.total_cmp(&y.time));
    out
}

/// `(2w)×(2w)` checkerboard kernel with a centred Gaussian taper (σ = w/2);
/// `sign = −1` flips the pattern.
pub fn checkerboard_kernel(half_width: usize, sign: f64) -> Vec<f64> {
    let w = half_width as f64;
    let sigma = w / 2.0;
    let side = 2 * half_width;
    let mut k = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let (di, dj) = (i as f64 - w + 0.5, j as f64 - w + 0.5);
            let g = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            let s = if (i < half_width) == (j < half_width) { 1.0 } else { -1.0 };
            k.push(sign * s * g);
        }
    }
    k
}

/// Kernel correlation along the diagonal for centres `c ∈ [w, Q − w]`.
pub fn foote_curve(gram: &GramMatrix, half_width: usize, sign: f64) -> Vec<(usize, f64)> {
    let q = gram.size();
    let w = half_width;
    if w == 0 || q < 2 * w {
        return Vec::new();
    }
    let kernel = checkerboard_kernel(w, sign);
    let side = 2 * w;
    (w..=q - w)
        .map(|c| {
            let mut acc = 0.0;
            for i in 0..side {
                for j in 0..side {
                    acc += kernel[i * side + j] * gram.get(c + i - w, c + j - w);
                }
            }
            (c, acc)
        })
        .collect()
}

/// Local maxima of the MAD-normalized kernel curve above the `quantile`
/// threshold, thinned strongest-first so kept times are `min_gap` apart.
pub fn foote_novelty(
    grid: &EmbeddingGrid,
    gram: &GramMatrix,
    half_width: usize,
    min_gap: f64,
    quantile: f64,
) -> Vec<BoundaryCandidate> {
    let curve = foote_curve(gram, half_width, 1.0);
    if curve.is_empty() {
        return Vec::new();
    }
    let raw: Vec<f64> = curve.iter().map(|(_, v)| *v).collect();
    let mass: f64 = checkerboard_kernel(half_width, 1.0).iter().map(|x| x.abs()).sum();
    let floor = 1e-9 * mass;
    let z = mad_z(&raw);
    let threshold = stats::quantile(&z, quantile);
    let mut peaks: Vec<(usize, f64)> = (0..z.len())
        .filter(|&i| {
            let left_ok = i == 0 || z[i] > z[i - 1];
            let right_ok = i + 1 == z.len() || z[i] >= z[i + 1];
            left_ok && right_ok && z[i] >= threshold && raw[i] > floor
        })
        .map(|i| (i, z[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut kept: Vec<BoundaryCandidate> = Vec::new();
    for (i, strength) in peaks {
        let c = curve[i].0;
        let time = (grid.times[c - 1] + grid.times[c]) / 2.0;
        if kept.iter().all(|k| (k.time - time).abs() >= min_gap) {
            kept.push(BoundaryCandidate::new(time, strength, Head::Ssm));
        }
    }
    kept.sort_by(|a, b| a.time.total_cmp(&b.time));
    kept
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbsegConfig {
    pub ssm_quantile: f64,
    /// Floor on the SSM minimum separation, seconds.
    pub ssm_min_seconds: f64,
    pub ssm_min_half_width: usize,
    pub kts_penalty: f64,
}

impl Default for EmbsegConfig {
    fn default() -> Self {
        Self {
            ssm_quantile: 0.7,
            ssm_min_seconds: 4.0,
            ssm_min_half_width: 4,
            kts_penalty: 1.4,
        }
    }
}

pub fn ssm_head(
    grid: &EmbeddingGrid,
    gram: &GramMatrix,
    min_segment_seconds: f64,
    config: &EmbsegConfig,
) -> Vec<BoundaryCandidate> {
    let gap = min_segment_seconds.max(config.ssm_min_seconds);
    let w = ((gap / grid.step()).round() as usize).max(config.ssm_min_half_width);
    foote_novelty(grid, gram, w, gap, config.ssm_quantile)
}

pub fn kts_head(
    grid: &EmbeddingGrid,
    gram: &GramMatrix,
    min_segment_seconds: f64,
    config: &EmbsegConfig,
) -> Vec<BoundaryCandidate> {
    let min_bins = ((min_segment_seconds / grid.step()).ceil() as usize).max(1);
    kts_segment(gram, &grid.times, config.kts_penalty, min_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis(dim: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    }

    fn blocks(lengths: &[usize], dim: usize) -> Vec<Vec<f64>> {
        lengths
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(basis(dim, i), n))
            .collect()
    }

    #[test]
    fn resample_sparse_frames_passthrough() {
        let times = vec![0.0, 2.0, 4.0];
        let e = vec![vec![3.0, 4.0], vec![0.0, 2.0], vec![1.0, 0.0]];
        let g = resample_embeddings(&times, &e);
        assert_eq!(g.times, times);
        assert!((g.vectors[0][0] - 0.6).abs() < 1e-7);
        assert!((g.vectors[1][1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn resample_duplicates_and_cancellation() {
        let g = resample_embeddings(&[0.1, 0.6], &[vec![0.0, 2.0], vec![0.0, 2.0]]);
        assert_eq!(g.len(), 1);
        assert!((g.vectors[0][1] - 1.0).abs() < 1e-7);
        assert!((g.times[0] - 0.35).abs() < 1e-12);
        let g = resample_embeddings(&[0.1, 0.6], &[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert!(g.degenerate[0]);
        assert_eq!(g.vectors[0], vec![0.0, 0.0]);
    }

    #[test]
    fn kts_cost_closed_forms() {
        let gram = GramMatrix::new(&blocks(&[3, 2], 2), Exec::Sequential);
        assert_eq!(gram.kts_cost(0, 0).unwrap(), -1.0);
        assert_eq!(gram.kts_cost(0, 2).unwrap(), -1.0);
        assert_eq!(gram.kts_cost(2, 3).unwrap(), -0.5);
        assert!(gram.kts_cost(3, 2).is_err());
        assert!(gram.kts_cost(0, 5).is_err());
    }

    #[test]
    fn kts_two_orthogonal_blocks() {
        let vectors = blocks(&[5, 5], 4);
        let gram = GramMatrix::new(&vectors, Exec::Sequential);
        assert!((gram.kts_cost(0, 9).unwrap() + 0.5).abs() < 1e-12);
        let (k, gain) = best_split(&gram, 0, 9, 1.4, 1).unwrap();
        assert_eq!(k, 4);
        assert!((gain - 0.1).abs() < 1e-9);
        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let cuts = kts_segment(&gram, &times, 1.4, 1);
        assert_eq!(cuts.len(), 1);
        assert_eq!(cuts[0].time, 4.5);
    }

    #[test]
    fn kts_homogeneous_and_huge_penalty() {
        let times: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let gram = GramMatrix::new(&blocks(&[12], 3), Exec::Sequential);
        assert!(kts_segment(&gram, &times, 1.4, 1).is_empty());
        let gram = GramMatrix::new(&blocks(&[6, 6], 3), Exec::Sequential);
        assert!(kts_segment(&gram, &times, 1e6, 1).is_empty());
    }

    #[test]
    fn foote_peak_at_boundary() {
        let vectors = blocks(&[20, 20], 3);
        let times: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let grid = EmbeddingGrid::from_unit_vectors(times, vectors);
        let gram = GramMatrix::new(&grid.vectors, Exec::Sequential);
        let c = foote_novelty(&grid, &gram, 4, 4.0, 0.7);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].time, 19.5);
        // analytic value at the cut: diagonal quadrants all 1, off-diagonal 0
        let kernel = checkerboard_kernel(4, 1.0);
        let diag: f64 = kernel.iter().filter(|v| **v > 0.0).sum();
        let at_cut = foote_curve(&gram, 4, 1.0).into_iter().find(|(c, _)| *c == 20).unwrap().1;
        assert!((at_cut - diag).abs() < 1e-9);
    }

    #[test]
    fn foote_constant_has_no_peaks() {
        let vectors = blocks(&[30], 3);
        let grid = EmbeddingGrid::from_unit_vectors((0..30).map(|i| i as f64).collect(), vectors);
        let gram = GramMatrix::new(&grid.vectors, Exec::Sequential);
        assert!(foote_novelty(&grid, &gram, 4, 4.0, 0.7).is_empty());
        let short = EmbeddingGrid::from_unit_vectors(vec![0.0, 1.0], blocks(&[2], 2));
        let gram = GramMatrix::new(&short.vectors, Exec::Sequential);
        assert!(foote_novelty(&short, &gram, 4, 4.0, 0.7).is_empty());
    }

    #[test]
    fn foote_kernel_sign_flip_negates() {
        let vectors = blocks(&[7, 9, 8], 3);
        let gram = GramMatrix::new(&vectors, Exec::Sequential);
        let pos = foote_curve(&gram, 3, 1.0);
        let neg = foote_curve(&gram, 3, -1.0);
        for ((_, a), (_, b)) in pos.iter().zip(&neg) {
            assert_eq!(*a, -*b);
        }
    }

    proptest! {
        #[test]
        fn integral_matches_direct_sum(
            q in 1usize..20,
            seed in any::<u64>(),
            ab in (0usize..20, 0usize..20),
        ) {
            let vectors: Vec<Vec<f64>> = (0..q)
                .map(|i| stats::unit(&(0..5).map(|k| crate::rng::unit_f64(&[seed, i as u64, k]) - 0.5).collect::<Vec<_>>()))
                .collect();
            let gram = GramMatrix::new(&vectors, Exec::Parallel);
            let (a, b) = (ab.0 % q, ab.1 % q);
            let (a, b) = (a.min(b), a.max(b));
            let mut direct = 0.0;
            for p in a..=b {
                for r in a..=b {
                    direct += stats::dot(&vectors[p], &vectors[r]);
                }
            }
            let len = (b - a + 1) as f64;
            prop_assert!((gram.kts_cost(a, b).unwrap() + direct / (len * len)).abs() < 1e-9);
            prop_assert!((gram.get(a, b) - gram.get(b, a)).abs() < 1e-12);
        }
    }
}
