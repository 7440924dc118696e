//! Kraskov-Stögbauer-Grassberger mutual-information estimator (algorithm 1).
//!
//! ```text
//! I = ψ(k) + ψ(N) - < ψ(n_x(i) + 1) + ψ(n_y(i) + 1) >_i
//! ```
//!
//! `ε_i` is the Chebyshev distance from joint point `i` to its `k`-th nearest
//! neighbour in `[x; y]`; `n_x(i)` and `n_y(i)` count other points strictly
//! closer than `ε_i` in each marginal space.

mod digamma;
mod kdtree;

pub use digamma::digamma;
pub use kdtree::{chebyshev, KdTree, DEFAULT_LEAF_SIZE};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_aligned, zscore, FeatureMatrix};
use crate::{seed, Error, Result};

/// Neighbour-search implementation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborSearch {
    #[default]
    KdTree,
    /// `O(N²)` scan; reference path for small inputs.
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KsgConfig {
    pub k: usize,
    /// Half-width of the uniform tie-breaking jitter added after z-scoring.
    pub noise: f64,
    /// Seed of the jitter. Jitter for entry `(row, column)` depends only on
    /// this seed and the coordinates, so swapping `x` and `y` is exact.
    pub jitter_seed: u64,
    pub search: NeighborSearch,
    pub leaf_size: usize,
}

impl Default for KsgConfig {
    fn default() -> Self {
        Self { k: 5, noise: 1e-10, jitter_seed: 0, search: NeighborSearch::KdTree, leaf_size: DEFAULT_LEAF_SIZE }
    }
}

impl KsgConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Usage("KSG neighbour count k must be at least 1".into()));
        }
        if self.k >= n {
            return Err(Error::Usage(format!("KSG needs k < N, got k = {} with N = {n}", self.k)));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Usage(format!("jitter amplitude must be finite and non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

/// Distances to the `k`-th nearest other point (Chebyshev), by brute force.
pub fn kth_neighbor_distances_brute(points: &[f64], dims: usize, k: usize) -> Result<Vec<f64>> {
    let n = points.len() / dims;
    if k == 0 || k >= n {
        return Err(Error::Usage(format!("need 1 <= k < N, got k = {k}, N = {n}")));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let q = &points[i * dims..(i + 1) * dims];
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| chebyshev(q, &points[j * dims..(j + 1) * dims]))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// Distances to the `k`-th nearest other point (Chebyshev), via a kd-tree.
pub fn kth_neighbor_distances(points: &[f64], dims: usize, k: usize) -> Result<Vec<f64>> {
    let n = points.len() / dims;
    if k == 0 || k >= n {
        return Err(Error::Usage(format!("need 1 <= k < N, got k = {k}, N = {n}")));
    }
    let tree = KdTree::build(points, dims, DEFAULT_LEAF_SIZE);
    Ok((0..n).into_par_iter().map(|i| tree.kth_neighbor_distance(i, k)).collect())
}

/// For each point `i`, the number of other points at Chebyshev distance
/// strictly below `radii[i]`, by brute force.
pub fn marginal_counts_brute(points: &[f64], dims: usize, radii: &[f64]) -> Vec<usize> {
    let n = points.len() / dims;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let q = &points[i * dims..(i + 1) * dims];
            (0..n)
                .filter(|&j| j != i && chebyshev(q, &points[j * dims..(j + 1) * dims]) < radii[i])
                .count()
        })
        .collect()
}

/// As [`marginal_counts_brute`], via a kd-tree.
pub fn marginal_counts(points: &[f64], dims: usize, radii: &[f64]) -> Vec<usize> {
    marginal_counts_with(&KdTree::build(points, dims, DEFAULT_LEAF_SIZE), radii)
}

fn marginal_counts_with(tree: &KdTree, radii: &[f64]) -> Vec<usize> {
    (0..tree.len())
        .into_par_iter()
        .map(|i| {
            // The query point itself is at distance 0 and is inside any positive radius.
            let all = tree.count_strictly_within(tree.point(i), radii[i]);
            if radii[i] > 0.0 {
                all - 1
            } else {
                all
            }
        })
        .collect()
}

/// Per-point statistics behind one estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct KsgDetail {
    pub estimate: f64,
    pub radii: Vec<f64>,
    pub nx: Vec<usize>,
    pub ny: Vec<usize>,
}

fn prepare(m: &FeatureMatrix, cfg: &KsgConfig) -> Result<Vec<f64>> {
    let (z, _) = zscore(m)?;
    let d = z.cols();
    Ok(z
        .values()
        .iter()
        .enumerate()
        .map(|(pos, v)| v + cfg.noise * seed::hashed_unit(cfg.jitter_seed, (pos / d) as u64, (pos % d) as u64))
        .collect())
}

/// Estimate plus the radii and marginal counts. `count_psi` replaces the
/// digamma applied to the marginal counts, for fault injection; a constant
/// offset applied to every term would cancel.
pub fn ksg_detail_with(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    cfg: &KsgConfig,
    count_psi: &dyn Fn(f64) -> Result<f64>,
) -> Result<KsgDetail> {
    let n = check_aligned(x, y)?;
    cfg.validate(n)?;
    let xs = prepare(x, cfg)?;
    let ys = prepare(y, cfg)?;
    let (dx, dy) = (x.cols(), y.cols());
    let mut joint = Vec::with_capacity(n * (dx + dy));
    for i in 0..n {
        joint.extend_from_slice(&xs[i * dx..(i + 1) * dx]);
        joint.extend_from_slice(&ys[i * dy..(i + 1) * dy]);
    }
    let (radii, nx, ny) = match cfg.search {
        NeighborSearch::KdTree => {
            let jt = KdTree::build(&joint, dx + dy, cfg.leaf_size);
            let radii: Vec<f64> = (0..n).into_par_iter().map(|i| jt.kth_neighbor_distance(i, cfg.k)).collect();
            let nx = marginal_counts_with(&KdTree::build(&xs, dx, cfg.leaf_size), &radii);
            let ny = marginal_counts_with(&KdTree::build(&ys, dy, cfg.leaf_size), &radii);
            (radii, nx, ny)
        }
        NeighborSearch::BruteForce => {
            let radii = kth_neighbor_distances_brute(&joint, dx + dy, cfg.k)?;
            let nx = marginal_counts_brute(&xs, dx, &radii);
            let ny = marginal_counts_brute(&ys, dy, &radii);
            (radii, nx, ny)
        }
    };
    let mut acc = 0.0;
    for i in 0..n {
        acc += count_psi(nx[i] as f64 + 1.0)? + count_psi(ny[i] as f64 + 1.0)?;
    }
    let estimate = digamma(cfg.k as f64)? + digamma(n as f64)? - acc / n as f64;
    Ok(KsgDetail { estimate, radii, nx, ny })
}

pub fn ksg_detail(x: &FeatureMatrix, y: &FeatureMatrix, cfg: &KsgConfig) -> Result<KsgDetail> {
    ksg_detail_with(x, y, cfg, &digamma)
}

/// KSG mutual information in nats. Inputs are z-scored and jittered
/// internally; the result is not clamped at zero.
pub fn ksg_estimate(x: &FeatureMatrix, y: &FeatureMatrix, cfg: &KsgConfig) -> Result<f64> {
    ksg_detail(x, y, cfg).map(|d| d.estimate)
}
