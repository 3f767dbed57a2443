//! K-means color clustering, proportion-based cluster correspondence, and
//! per-cluster mask derivation.
//!
//! Clustering is Lloyd's algorithm with k-means++ seeding from an explicit
//! seed; identical inputs and seed always produce identical output. The
//! distance space defaults to raw RGB (the decoded image) and can be
//! switched to CIELAB; centroids are always reported in pixel-value units.

use crate::colorspace::rgb_to_lab_scalar;
use crate::image::{BinaryMask, ImageBuffer};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const CONVERGENCE_SHIFT: f64 = 1e-6;
const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{distinct} distinct unmasked colors is fewer than k = {k}")]
    TooFewDistinctColors { distinct: usize, k: usize },
    #[error("cluster counts differ: {0} vs {1}")]
    KMismatch(usize, usize),
    #[error("mask dimensions {mask:?} do not match image {image:?}")]
    MaskDimMismatch {
        mask: (usize, usize),
        image: (usize, usize),
    },
    #[error("expected a 3-channel image, got {0} channels")]
    NotRgb(usize),
}

/// Feature space used for k-means distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterSpace {
    #[default]
    Rgb,
    Lab,
}

/// One color cluster: centroid in pixel-value units plus the row-major
/// pixel indices of its members.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorCluster {
    pub centroid: [f64; 3],
    pub member_indices: Vec<usize>,
}

impl ColorCluster {
    pub fn member_count(&self) -> usize {
        self.member_indices.len()
    }

    /// Rec. 601 luma of the centroid, used as a deterministic tie-breaker.
    pub fn luminance(&self) -> f64 {
        0.299 * self.centroid[0] + 0.587 * self.centroid[1] + 0.114 * self.centroid[2]
    }
}

/// A full clustering of one image: the clusters partition the unmasked
/// pixel set (disjoint and exhaustive).
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<ColorCluster>,
    pub source_dims: (usize, usize),
    pub k: usize,
}

impl ClusterSet {
    pub fn total_members(&self) -> usize {
        self.clusters.iter().map(|c| c.member_count()).sum()
    }

    /// Proportion of clustered pixels belonging to each cluster.
    pub fn proportions(&self) -> Vec<f64> {
        let total = self.total_members() as f64;
        self.clusters
            .iter()
            .map(|c| c.member_count() as f64 / total)
            .collect()
    }
}

/// A perfect matching between two equally sized cluster sets; both index
/// columns are permutations of `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    /// `(gen_cluster_index, ref_cluster_index)` pairs, ordered by rank
    /// (largest membership first).
    pub pairs: Vec<(usize, usize)>,
}

/// K-means over the unmasked pixels of a 3-channel image.
///
/// Lloyd's algorithm with k-means++ seeding; converges when the largest
/// centroid shift drops below 1e-6 or after 300 iterations. A cluster that
/// empties is re-seeded with the point farthest from its assigned centroid
/// so k stays fixed.
pub fn kmeans_colors(
    img: &ImageBuffer,
    k: usize,
    mask: Option<&BinaryMask>,
    seed: u64,
) -> Result<ClusterSet, ClusterError> {
    kmeans_colors_in(img, k, mask, seed, ClusterSpace::Rgb)
}

/// [`kmeans_colors`] with an explicit distance space.
pub fn kmeans_colors_in(
    img: &ImageBuffer,
    k: usize,
    mask: Option<&BinaryMask>,
    seed: u64,
    space: ClusterSpace,
) -> Result<ClusterSet, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if img.channels() != 3 {
        return Err(ClusterError::NotRgb(img.channels()));
    }
    if let Some(m) = mask {
        if !m.matches_dims(img) {
            return Err(ClusterError::MaskDimMismatch {
                mask: (m.width(), m.height()),
                image: (img.width(), img.height()),
            });
        }
    }

    // Gather unmasked pixels and their feature-space coordinates.
    let mut indices = Vec::new();
    let mut rgb = Vec::new();
    for i in 0..img.pixel_count() {
        if mask.is_none_or(|m| m.get(i)) {
            let p = img.pixel(i);
            indices.push(i);
            rgb.push([p[0], p[1], p[2]]);
        }
    }
    let features: Vec<[f64; 3]> = match space {
        ClusterSpace::Rgb => rgb.clone(),
        ClusterSpace::Lab => rgb.iter().map(|&p| rgb_to_lab_scalar(p)).collect(),
    };

    let distinct = count_distinct(&features);
    if distinct < k {
        return Err(ClusterError::TooFewDistinctColors { distinct, k });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(&features, k, &mut rng);
    let mut assignment = vec![0usize; features.len()];

    for _ in 0..MAX_ITERATIONS {
        assign(&features, &centroids, &mut assignment);
        repair_empty_clusters(&features, &centroids, &mut assignment);

        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (f, &a) in features.iter().zip(assignment.iter()) {
            for c in 0..3 {
                sums[a][c] += f[c];
            }
            counts[a] += 1;
        }
        let mut max_shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let new = [
                sums[j][0] / counts[j] as f64,
                sums[j][1] / counts[j] as f64,
                sums[j][2] / counts[j] as f64,
            ];
            max_shift = max_shift.max(dist2(&new, &centroids[j]).sqrt());
            centroids[j] = new;
        }
        if max_shift < CONVERGENCE_SHIFT {
            break;
        }
    }
    assign(&features, &centroids, &mut assignment);
    repair_empty_clusters(&features, &centroids, &mut assignment);

    // Report centroids as mean member RGB regardless of distance space.
    let mut member_indices = vec![Vec::new(); k];
    let mut rgb_sums = vec![[0.0f64; 3]; k];
    for (pos, &a) in assignment.iter().enumerate() {
        member_indices[a].push(indices[pos]);
        for c in 0..3 {
            rgb_sums[a][c] += rgb[pos][c];
        }
    }
    let clusters = member_indices
        .into_iter()
        .zip(rgb_sums)
        .map(|(members, sum)| {
            let n = members.len() as f64;
            ColorCluster {
                centroid: [sum[0] / n, sum[1] / n, sum[2] / n],
                member_indices: members,
            }
        })
        .collect();

    Ok(ClusterSet {
        clusters,
        source_dims: (img.width(), img.height()),
        k,
    })
}

/// Rank-matches two cluster sets by membership size.
///
/// Each set is sorted by member count descending (ties: ascending centroid
/// luminance, then cluster index) and rank i pairs with rank i.
pub fn correspond_by_proportion(
    gen: &ClusterSet,
    reference: &ClusterSet,
) -> Result<Correspondence, ClusterError> {
    if gen.k != reference.k {
        return Err(ClusterError::KMismatch(gen.k, reference.k));
    }
    let gen_order = rank_order(gen);
    let ref_order = rank_order(reference);
    let pairs = gen_order.into_iter().zip(ref_order).collect();
    Ok(Correspondence { pairs })
}

/// One mask per cluster, true exactly at that cluster's member pixels.
pub fn masks_from_clusters(cs: &ClusterSet) -> Vec<BinaryMask> {
    let (w, h) = cs.source_dims;
    cs.clusters
        .iter()
        .map(|c| BinaryMask::from_indices(w, h, &c.member_indices))
        .collect()
}

fn rank_order(cs: &ClusterSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cs.k).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&cs.clusters[i], &cs.clusters[j]);
        b.member_count()
            .cmp(&a.member_count())
            .then_with(|| a.luminance().partial_cmp(&b.luminance()).unwrap())
            .then_with(|| i.cmp(&j))
    });
    order
}

fn count_distinct(features: &[[f64; 3]]) -> usize {
    let mut keys: Vec<[u64; 3]> = features
        .iter()
        .map(|f| [f[0].to_bits(), f[1].to_bits(), f[2].to_bits()])
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// k-means++ seeding: first centroid uniform, the rest D²-weighted.
fn seed_plus_plus(features: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(features[rng.random_range(0..features.len())]);
    let mut d2: Vec<f64> = features.iter().map(|f| dist2(f, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining distances zero (duplicate-heavy input): pick the
            // first point not already chosen as a centroid.
            features
                .iter()
                .position(|f| centroids.iter().all(|c| dist2(f, c) > 0.0))
                .unwrap_or(0)
        } else {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = features.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let c = features[next];
        centroids.push(c);
        for (i, f) in features.iter().enumerate() {
            d2[i] = d2[i].min(dist2(f, &c));
        }
    }
    centroids
}

fn assign(features: &[[f64; 3]], centroids: &[[f64; 3]], assignment: &mut [usize]) {
    for (i, f) in features.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = dist2(f, &centroids[0]);
        for (j, c) in centroids.iter().enumerate().skip(1) {
            let d = dist2(f, c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment[i] = best;
    }
}

/// Re-seeds each emptied centroid with the point farthest from its
/// currently assigned centroid, keeping k fixed.
fn repair_empty_clusters(features: &[[f64; 3]], centroids: &[[f64; 3]], assignment: &mut [usize]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far_idx = 0usize;
        let mut far_d = -1.0;
        for (i, f) in features.iter().enumerate() {
            let d = dist2(f, &centroids[assignment[i]]);
            if d > far_d && counts[assignment[i]] > 1 {
                far_d = d;
                far_idx = i;
            }
        }
        assignment[far_idx] = empty;
    }
}
