//! Lloyd's K-Means over the colors of RoI pixels.
//!
//! The implementation is built for reproducibility:
//!
//! - all randomness comes from a seeded ChaCha stream, so identical inputs
//!   and seed give bit-identical centroids and assignments;
//! - points are aggregated by unique color (weighted) in a canonical order
//!   before iterating, which keeps the objective identical while making the
//!   result independent of input point order;
//! - the assignment step may run on rayon, but it is a pure per-point map
//!   and centroid accumulation always happens in the canonical order, so
//!   parallel and sequential runs produce the same bits;
//! - ties (a point equidistant to several centroids) go to the
//!   lowest-indexed centroid.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::ColorSpace;
use crate::error::{Error, Result};
use crate::mask::{BitMask, Frame};
use crate::parallel;

/// One sample for clustering: working-space color plus the flat raster
/// index it came from.
#[derive(Debug, Clone, Copy)]
pub struct ColorPoint {
    pub channels: [f64; 3],
    pub pixel_index: u32,
}

/// Centroid initialization strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KMeansInit {
    /// Sample k distinct colors, weighted by pixel count.
    RandomPoints,
    /// k-means++ seeding (distance-squared weighted).
    #[default]
    PlusPlus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub init: KMeansInit,
    pub seed: u64,
    pub max_iters: usize,
    /// Termination threshold on the largest centroid displacement, in
    /// working-space units.
    pub tol: f64,
    /// Independent restarts; the run with the lowest final inertia wins
    /// (first winner kept on ties). All restarts draw from one seeded
    /// stream, so the result stays deterministic.
    pub init_trials: usize,
    pub color_space: ColorSpace,
    /// Aggregate duplicate colors into weighted points before iterating.
    /// Same objective, much faster on natural images.
    pub compress_duplicates: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 3,
            init: KMeansInit::PlusPlus,
            seed: 42,
            max_iters: 100,
            tol: 1e-4,
            init_trials: 16,
            color_space: ColorSpace::Rgb,
            compress_duplicates: true,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::KMeans("k must be at least 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::KMeans("max_iters must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::KMeans("tol must be non-negative".into()));
        }
        if self.init_trials < 1 {
            return Err(Error::KMeans("init_trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// One color pool: a centroid, the raster pixels assigned to it, and its
/// share of the final inertia.
#[derive(Debug, Clone)]
pub struct ColorPool {
    pub centroid: [f64; 3],
    pub members: BitMask,
    pub count: u64,
    pub inertia_contribution: f64,
}

#[derive(Debug, Clone)]
pub struct KMeansOutcome {
    pub pools: Vec<ColorPool>,
    pub iterations: usize,
    /// Inertia under the final assignment.
    pub inertia: f64,
    /// Inertia recorded at each iteration's assignment step; non-increasing.
    pub inertia_history: Vec<f64>,
    pub requested_k: usize,
    /// Number of non-empty pools actually produced; smaller than
    /// `requested_k` when the input has fewer distinct colors.
    pub effective_k: usize,
    /// False when the run stopped at `max_iters` instead of the shift
    /// threshold.
    pub converged: bool,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Engine points: either the raw input or weighted unique colors, in a
/// canonical order.
struct PointSet {
    colors: Vec<[f64; 3]>,
    weights: Vec<f64>,
    /// Engine-point index for every input point.
    point_to_engine: Vec<u32>,
}

fn canonical_key(c: &[f64; 3]) -> [u64; 3] {
    [c[0].to_bits(), c[1].to_bits(), c[2].to_bits()]
}

impl PointSet {
    fn build(points: &[ColorPoint], compress: bool) -> PointSet {
        if !compress {
            return PointSet {
                colors: points.iter().map(|p| p.channels).collect(),
                weights: vec![1.0; points.len()],
                point_to_engine: (0..points.len() as u32).collect(),
            };
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.sort_unstable_by_key(|&i| canonical_key(&points[i as usize].channels));
        let mut colors: Vec<[f64; 3]> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut point_to_engine = vec![0u32; points.len()];
        let mut last: Option<[u64; 3]> = None;
        for &i in &order {
            let c = points[i as usize].channels;
            let key = canonical_key(&c);
            if last != Some(key) {
                colors.push(c);
                weights.push(0.0);
                last = Some(key);
            }
            let e = colors.len() - 1;
            weights[e] += 1.0;
            point_to_engine[i as usize] = e as u32;
        }
        PointSet {
            colors,
            weights,
            point_to_engine,
        }
    }

    fn len(&self) -> usize {
        self.colors.len()
    }

    /// Nearest-centroid assignment; ties break to the lowest centroid index.
    fn assign(&self, centroids: &[[f64; 3]]) -> Vec<u32> {
        parallel::map_collect_fine(&self.colors, |c| {
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for (j, centroid) in centroids.iter().enumerate() {
                let d = dist2(c, centroid);
                if d < best_d {
                    best_d = d;
                    best = j as u32;
                }
            }
            best
        })
    }

    /// Weighted inertia in canonical point order.
    fn inertia(&self, centroids: &[[f64; 3]], assignment: &[u32]) -> f64 {
        let mut total = 0.0;
        for ((c, &a), &w) in self.colors.iter().zip(assignment).zip(&self.weights) {
            total += w * dist2(c, &centroids[a as usize]);
        }
        total
    }

    /// Per-cluster weighted means; clusters with no members keep their old
    /// centroid and are returned for repair.
    fn means(&self, assignment: &[u32], old: &[[f64; 3]]) -> (Vec<[f64; 3]>, Vec<usize>) {
        let k = old.len();
        let mut sums = vec![[0.0f64; 3]; k];
        let mut wsum = vec![0.0f64; k];
        for ((c, &a), &w) in self.colors.iter().zip(assignment).zip(&self.weights) {
            let s = &mut sums[a as usize];
            s[0] += w * c[0];
            s[1] += w * c[1];
            s[2] += w * c[2];
            wsum[a as usize] += w;
        }
        let mut empty = Vec::new();
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            if wsum[j] > 0.0 {
                out.push([sums[j][0] / wsum[j], sums[j][1] / wsum[j], sums[j][2] / wsum[j]]);
            } else {
                empty.push(j);
                out.push(old[j]);
            }
        }
        (out, empty)
    }

    /// Reseeds each empty cluster at the point farthest from its assigned
    /// centroid. Deterministic: scans in canonical order, first maximum
    /// wins, and a point is used at most once per repair round.
    fn repair_empty(
        &self,
        centroids: &mut [[f64; 3]],
        assignment: &[u32],
        empty: &[usize],
    ) {
        let mut taken: Vec<bool> = vec![false; self.len()];
        for &j in empty {
            let mut far_idx = None;
            let mut far_d = -1.0;
            for (i, (c, &a)) in self.colors.iter().zip(assignment).enumerate() {
                if taken[i] {
                    continue;
                }
                let d = dist2(c, &centroids[a as usize]);
                if d > far_d {
                    far_d = d;
                    far_idx = Some(i);
                }
            }
            if let Some(i) = far_idx {
                taken[i] = true;
                centroids[j] = self.colors[i];
            }
        }
    }
}

struct LloydRun {
    centroids: Vec<[f64; 3]>,
    /// Nearest-centroid assignment with respect to the final centroids.
    assignment: Vec<u32>,
    /// Inertia under the final assignment; the restart selection key.
    inertia: f64,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// One full Lloyd descent from the given initial centroids.
fn lloyd(set: &PointSet, mut centroids: Vec<[f64; 3]>, cfg: &KMeansConfig) -> LloydRun {
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let assignment = set.assign(&centroids);
        let inertia = set.inertia(&centroids, &assignment);
        if let Some(&prev) = history.last() {
            debug_assert!(inertia <= prev, "inertia increased: {prev} -> {inertia}");
        }
        history.push(inertia);

        let (new_centroids, empty) = set.means(&assignment, &centroids);
        let mut new_centroids = new_centroids;
        if !empty.is_empty() {
            set.repair_empty(&mut new_centroids, &assignment, &empty);
        }
        let shift = centroids
            .iter()
            .zip(&new_centroids)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift <= cfg.tol {
            converged = true;
            break;
        }
    }
    // Final pass so the reported assignment is nearest-centroid with
    // respect to the final centroids.
    let assignment = set.assign(&centroids);
    let inertia = set.inertia(&centroids, &assignment);
    LloydRun {
        centroids,
        assignment,
        inertia,
        history,
        iterations,
        converged,
    }
}

fn init_centroids(set: &PointSet, k: usize, init: KMeansInit, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    match init {
        KMeansInit::RandomPoints => {
            // Weighted sampling without replacement over distinct colors.
            let mut weights = set.weights.clone();
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                let dist = WeightedIndex::new(&weights).expect("positive weights remain");
                let i = dist.sample(rng);
                out.push(set.colors[i]);
                weights[i] = 0.0;
            }
            out
        }
        KMeansInit::PlusPlus => {
            let first = WeightedIndex::new(&set.weights)
                .expect("non-empty point set")
                .sample(rng);
            let mut out = vec![set.colors[first]];
            let mut min_d: Vec<f64> = set
                .colors
                .iter()
                .map(|c| dist2(c, &out[0]))
                .collect();
            while out.len() < k {
                let weights: Vec<f64> = min_d
                    .iter()
                    .zip(&set.weights)
                    .map(|(d, w)| d * w)
                    .collect();
                let dist = WeightedIndex::new(&weights).expect("k capped at distinct colors");
                let i = dist.sample(rng);
                let chosen = set.colors[i];
                for (d, c) in min_d.iter_mut().zip(&set.colors) {
                    let nd = dist2(c, &chosen);
                    if nd < *d {
                        *d = nd;
                    }
                }
                out.push(chosen);
            }
            out
        }
    }
}

/// Runs Lloyd's algorithm on `points` and materializes the clusters as
/// [`ColorPool`]s over a raster of the given dimensions.
pub fn kmeans(
    points: &[ColorPoint],
    raster: (u32, u32),
    cfg: &KMeansConfig,
) -> Result<KMeansOutcome> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("kmeans needs at least one point"));
    }
    let raster_len = (raster.0 as usize) * (raster.1 as usize);
    if let Some(p) = points.iter().find(|p| p.pixel_index as usize >= raster_len) {
        return Err(Error::KMeans(format!(
            "pixel index {} outside {}x{} raster",
            p.pixel_index, raster.0, raster.1
        )));
    }

    let set = PointSet::build(points, cfg.compress_duplicates);
    let k = cfg.k.min(set.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<LloydRun> = None;
    for _ in 0..cfg.init_trials {
        let centroids = init_centroids(&set, k, cfg.init, &mut rng);
        let run = lloyd(&set, centroids, cfg);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let LloydRun {
        centroids,
        assignment,
        inertia: _,
        history,
        iterations,
        converged,
    } = best.expect("at least one trial");

    // Materialize pools over the raster.
    let mut counts = vec![0u64; k];
    let mut inertia_c = vec![0.0f64; k];
    for ((c, &a), &w) in set.colors.iter().zip(&assignment).zip(&set.weights) {
        counts[a as usize] += w as u64;
        inertia_c[a as usize] += w * dist2(c, &centroids[a as usize]);
    }
    let mut members: Vec<BitMask> = (0..k).map(|_| BitMask::zeros(raster.0, raster.1)).collect();
    for (p, &e) in points.iter().zip(&set.point_to_engine) {
        let cluster = assignment[e as usize] as usize;
        members[cluster].set(p.pixel_index as usize);
    }

    let mut pools = Vec::with_capacity(k);
    for j in 0..k {
        if counts[j] == 0 {
            continue; // repair could not fill it; drop rather than emit an empty pool
        }
        pools.push(ColorPool {
            centroid: centroids[j],
            members: std::mem::replace(&mut members[j], BitMask::zeros(0, 0)),
            count: counts[j],
            inertia_contribution: inertia_c[j],
        });
    }
    let effective_k = pools.len();
    let inertia = pools.iter().map(|p| p.inertia_contribution).sum();
    if effective_k < cfg.k {
        log::debug!(
            "kmeans produced {effective_k} pools for k={} ({} distinct colors)",
            cfg.k,
            set.len()
        );
    }
    Ok(KMeansOutcome {
        pools,
        iterations,
        inertia,
        inertia_history: history,
        requested_k: cfg.k,
        effective_k,
        converged,
    })
}

/// Clusters the colors of the RoI pixels of a frame. The pools partition
/// the RoI exactly: member masks are pairwise disjoint and their union is
/// the RoI.
pub fn cluster_roi(frame: &Frame, roi: &BitMask, cfg: &KMeansConfig) -> Result<KMeansOutcome> {
    if roi.width != frame.width || roi.height != frame.height {
        return Err(Error::DimensionMismatch {
            left_w: frame.width,
            left_h: frame.height,
            right_w: roi.width,
            right_h: roi.height,
        });
    }
    let points: Vec<ColorPoint> = roi
        .iter_set()
        .map(|i| ColorPoint {
            channels: cfg.color_space.to_working(frame.pixels[i]),
            pixel_index: i as u32,
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyRoi);
    }
    kmeans(&points, (frame.width, frame.height), cfg)
}

/// Color statistics of a pool: working-space mean, per-channel population
/// variance, and the pool's fraction of the RoI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    pub fraction: f64,
}

impl PoolStats {
    /// The feature vector scored by the sub-class classifier.
    pub fn features(&self) -> [f64; 3] {
        self.mean
    }
}

/// Two-pass mean/variance of a pool's member pixels.
pub fn pool_stats(
    pool: &ColorPool,
    frame: &Frame,
    space: ColorSpace,
    roi_total: u64,
) -> Result<PoolStats> {
    if pool.count == 0 {
        return Err(Error::EmptyInput("pool has no members"));
    }
    let mut mean = [0.0f64; 3];
    let mut n = 0u64;
    for i in pool.members.iter_set() {
        let c = space.to_working(frame.pixels[i]);
        mean[0] += c[0];
        mean[1] += c[1];
        mean[2] += c[2];
        n += 1;
    }
    let nf = n as f64;
    mean = [mean[0] / nf, mean[1] / nf, mean[2] / nf];
    let mut var = [0.0f64; 3];
    for i in pool.members.iter_set() {
        let c = space.to_working(frame.pixels[i]);
        for d in 0..3 {
            let diff = c[d] - mean[d];
            var[d] += diff * diff;
        }
    }
    var = [var[0] / nf, var[1] / nf, var[2] / nf];
    let fraction = if roi_total == 0 {
        0.0
    } else {
        n as f64 / roi_total as f64
    };
    Ok(PoolStats {
        mean,
        variance: var,
        fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::Rgb;
    use rand::Rng;

    fn pts(colors: &[[f64; 3]]) -> Vec<ColorPoint> {
        colors
            .iter()
            .enumerate()
            .map(|(i, &channels)| ColorPoint {
                channels,
                pixel_index: i as u32,
            })
            .collect()
    }

    fn shape(n: usize) -> (u32, u32) {
        (n as u32, 1)
    }

    #[test]
    fn k1_centroid_is_mean() {
        let colors: Vec<[f64; 3]> = (0..37)
            .map(|i| {
                let t = i as f64 / 36.0;
                [t, t * t, 1.0 - t]
            })
            .collect();
        let points = pts(&colors);
        let cfg = KMeansConfig {
            k: 1,
            ..KMeansConfig::default()
        };
        let out = kmeans(&points, shape(points.len()), &cfg).unwrap();
        assert_eq!(out.effective_k, 1);
        let mut mean = [0.0f64; 3];
        for c in &colors {
            for d in 0..3 {
                mean[d] += c[d];
            }
        }
        for d in 0..3 {
            mean[d] /= colors.len() as f64;
            assert!(
                (out.pools[0].centroid[d] - mean[d]).abs() < 1e-12,
                "channel {d}: {} vs {}",
                out.pools[0].centroid[d],
                mean[d]
            );
        }
    }

    #[test]
    fn two_separated_duplicate_groups() {
        let a = [0.1, 0.1, 0.1];
        let b = [0.9, 0.9, 0.9];
        let mut colors = vec![a; 10];
        colors.extend(vec![b; 10]);
        let points = pts(&colors);
        let cfg = KMeansConfig {
            k: 2,
            ..KMeansConfig::default()
        };
        let out = kmeans(&points, shape(points.len()), &cfg).unwrap();
        assert_eq!(out.effective_k, 2);
        let mut centroids: Vec<[f64; 3]> = out.pools.iter().map(|p| p.centroid).collect();
        centroids.sort_by(|x, y| x[0].total_cmp(&y[0]));
        assert_eq!(centroids[0], a);
        assert_eq!(centroids[1], b);
        assert!(out.pools.iter().all(|p| p.count == 10));
        assert!(out.inertia.abs() < 1e-15);
    }

    #[test]
    fn uniform_color_collapses_to_one_pool() {
        let colors = vec![[0.5, 0.25, 0.75]; 40];
        let points = pts(&colors);
        let cfg = KMeansConfig {
            k: 5,
            ..KMeansConfig::default()
        };
        let out = kmeans(&points, shape(points.len()), &cfg).unwrap();
        assert_eq!(out.effective_k, 1);
        assert_eq!(out.requested_k, 5);
        assert_eq!(out.pools[0].count, 40);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let colors: Vec<[f64; 3]> = (0..120)
            .map(|_| {
                [
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                ]
            })
            .collect();
        let points = pts(&colors);
        let cfg = KMeansConfig {
            k: 4,
            seed: 99,
            ..KMeansConfig::default()
        };
        let a = kmeans(&points, shape(points.len()), &cfg).unwrap();
        let b = kmeans(&points, shape(points.len()), &cfg).unwrap();
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
        assert_eq!(a.pools.len(), b.pools.len());
        for (pa, pb) in a.pools.iter().zip(&b.pools) {
            assert_eq!(pa.centroid.map(f64::to_bits), pb.centroid.map(f64::to_bits));
            assert_eq!(pa.members.bits, pb.members.bits);
        }
    }

    #[test]
    fn permuting_points_does_not_change_inertia() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut colors: Vec<[f64; 3]> = (0..60)
            .map(|_| {
                [
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                ]
            })
            .collect();
        let cfg = KMeansConfig {
            k: 3,
            seed: 5,
            init: KMeansInit::PlusPlus,
            ..KMeansConfig::default()
        };
        let points = pts(&colors);
        let base = kmeans(&points, shape(points.len()), &cfg).unwrap();
        // A deterministic shuffle: reverse, then interleave halves.
        colors.reverse();
        let mid = colors.len() / 2;
        let (left, right) = colors.split_at(mid);
        let mixed: Vec<[f64; 3]> = left
            .iter()
            .zip(right)
            .flat_map(|(a, b)| [*a, *b])
            .collect();
        let permuted = pts(&mixed);
        let out = kmeans(&permuted, shape(permuted.len()), &cfg).unwrap();
        assert_eq!(base.inertia.to_bits(), out.inertia.to_bits());
    }

    #[test]
    fn inertia_history_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let colors: Vec<[f64; 3]> = (0..200)
            .map(|_| {
                [
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                ]
            })
            .collect();
        let points = pts(&colors);
        let cfg = KMeansConfig {
            k: 4,
            seed: 1,
            tol: 0.0,
            ..KMeansConfig::default()
        };
        let out = kmeans(&points, shape(points.len()), &cfg).unwrap();
        for w in out.inertia_history.windows(2) {
            assert!(w[1] <= w[0], "history not monotone: {:?}", out.inertia_history);
        }
    }

    /// Exhaustive assignment enumeration: the optimal clustering of n
    /// points into at most k groups, scored with centroids at group means.
    fn brute_force_optimum(colors: &[[f64; 3]], k: usize) -> f64 {
        let n = colors.len();
        let total = (k as u64).pow(n as u32);
        let mut best = f64::INFINITY;
        for code in 0..total {
            let mut c = code;
            let mut sums = vec![[0.0f64; 3]; k];
            let mut counts = vec![0u64; k];
            let mut assign = vec![0usize; n];
            for (i, a) in assign.iter_mut().enumerate() {
                *a = (c % k as u64) as usize;
                c /= k as u64;
                counts[*a] += 1;
                for d in 0..3 {
                    sums[*a][d] += colors[i][d];
                }
            }
            let mut inertia = 0.0;
            for (i, &a) in assign.iter().enumerate() {
                for d in 0..3 {
                    let m = sums[a][d] / counts[a] as f64;
                    let diff = colors[i][d] - m;
                    inertia += diff * diff;
                }
            }
            if inertia < best {
                best = inertia;
            }
        }
        best
    }

    #[test]
    fn twelve_point_runs_reach_the_exhaustive_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let colors: Vec<[f64; 3]> = (0..12)
            .map(|_| {
                [
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                    rng.random_range(0..=255) as f64 / 255.0,
                ]
            })
            .collect();
        let optimum = brute_force_optimum(&colors, 3);
        let points = pts(&colors);
        let cfg = KMeansConfig {
            k: 3,
            seed: 17,
            tol: 0.0,
            ..KMeansConfig::default()
        };
        let out = kmeans(&points, shape(points.len()), &cfg).unwrap();
        assert!(
            out.inertia >= optimum - 1e-9,
            "inertia {} below exhaustive optimum {}",
            out.inertia,
            optimum
        );
    }

    #[test]
    fn cluster_roi_three_bands_recovers_the_partition() {
        let width = 12u32;
        let height = 6u32;
        let band_colors = [Rgb([250, 10, 10]), Rgb([10, 250, 10]), Rgb([10, 10, 250])];
        let pixels: Vec<Rgb> = (0..(width * height) as usize)
            .map(|i| {
                let x = (i as u32) % width;
                band_colors[(x / 4) as usize]
            })
            .collect();
        let frame = Frame::new(width, height, pixels, "bands").unwrap();
        let roi = BitMask {
            width,
            height,
            bits: vec![true; (width * height) as usize],
        };
        let cfg = KMeansConfig {
            k: 3,
            ..KMeansConfig::default()
        };
        let out = cluster_roi(&frame, &roi, &cfg).unwrap();
        assert_eq!(out.effective_k, 3);
        for pool in &out.pools {
            assert_eq!(pool.count, (width * height / 3) as u64);
            // every pool is exactly one band
            let first = pool.members.iter_set().next().unwrap();
            let band = ((first as u32) % width) / 4;
            for i in pool.members.iter_set() {
                assert_eq!(((i as u32) % width) / 4, band);
            }
        }
    }

    #[test]
    fn cluster_roi_separates_bands_in_lab_space() {
        let width = 9u32;
        let band_colors = [Rgb([240, 30, 30]), Rgb([30, 240, 30]), Rgb([30, 30, 240])];
        let pixels: Vec<Rgb> = (0..9).map(|x| band_colors[x / 3]).collect();
        let frame = Frame::new(width, 1, pixels, "lab").unwrap();
        let roi = BitMask {
            width,
            height: 1,
            bits: vec![true; 9],
        };
        let cfg = KMeansConfig {
            k: 3,
            color_space: ColorSpace::Lab,
            ..KMeansConfig::default()
        };
        let out = cluster_roi(&frame, &roi, &cfg).unwrap();
        assert_eq!(out.effective_k, 3);
        assert!(out.pools.iter().all(|p| p.count == 3));
        assert!(out.inertia.abs() < 1e-12);
    }

    #[test]
    fn cluster_roi_partial_roi_reports_shortfall() {
        let width = 8u32;
        let pixels: Vec<Rgb> = (0..8)
            .map(|x| if x < 4 { Rgb([200, 0, 0]) } else { Rgb([0, 200, 0]) })
            .collect();
        let frame = Frame::new(width, 1, pixels, "two").unwrap();
        let mut roi = BitMask::zeros(width, 1);
        for i in 0..4 {
            roi.set(i);
        }
        let cfg = KMeansConfig {
            k: 2,
            ..KMeansConfig::default()
        };
        let out = cluster_roi(&frame, &roi, &cfg).unwrap();
        assert_eq!(out.effective_k, 1);
        assert_eq!(out.requested_k, 2);
        assert_eq!(out.pools[0].count, 4);
    }

    #[test]
    fn cluster_roi_empty_roi_is_an_error() {
        let frame = Frame::new(2, 2, vec![Rgb::BLACK; 4], "e").unwrap();
        let roi = BitMask::zeros(2, 2);
        assert!(matches!(
            cluster_roi(&frame, &roi, &KMeansConfig::default()),
            Err(Error::EmptyRoi)
        ));
    }

    #[test]
    fn pool_stats_uniform_pool_has_zero_variance() {
        let frame = Frame::new(4, 1, vec![Rgb([100, 150, 200]); 4], "u").unwrap();
        let roi = BitMask {
            width: 4,
            height: 1,
            bits: vec![true; 4],
        };
        let out = cluster_roi(&frame, &roi, &KMeansConfig::default()).unwrap();
        let stats = pool_stats(&out.pools[0], &frame, ColorSpace::Rgb, 4).unwrap();
        assert_eq!(stats.variance, [0.0, 0.0, 0.0]);
        assert_eq!(stats.fraction, 1.0);
    }

    #[test]
    fn pool_stats_two_colors_mean_is_midpoint() {
        let a = Rgb([0, 0, 0]);
        let b = Rgb([255, 255, 255]);
        let frame = Frame::new(4, 1, vec![a, b, a, b], "m").unwrap();
        let roi = BitMask {
            width: 4,
            height: 1,
            bits: vec![true; 4],
        };
        let cfg = KMeansConfig {
            k: 1,
            ..KMeansConfig::default()
        };
        let out = cluster_roi(&frame, &roi, &cfg).unwrap();
        let stats = pool_stats(&out.pools[0], &frame, ColorSpace::Rgb, 4).unwrap();
        for d in 0..3 {
            assert!((stats.mean[d] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_stats_matches_direct_two_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pixels: Vec<Rgb> = (0..32)
            .map(|_| {
                Rgb([
                    rng.random_range(0..=255),
                    rng.random_range(0..=255),
                    rng.random_range(0..=255),
                ])
            })
            .collect();
        let frame = Frame::new(32, 1, pixels.clone(), "r").unwrap();
        let roi = BitMask {
            width: 32,
            height: 1,
            bits: vec![true; 32],
        };
        let cfg = KMeansConfig {
            k: 1,
            ..KMeansConfig::default()
        };
        let out = cluster_roi(&frame, &roi, &cfg).unwrap();
        let stats = pool_stats(&out.pools[0], &frame, ColorSpace::Rgb, 32).unwrap();

        // reference computation straight from the pixel list
        let ws: Vec<[f64; 3]> = pixels.iter().map(|&p| ColorSpace::Rgb.to_working(p)).collect();
        let n = ws.len() as f64;
        let mut mean = [0.0f64; 3];
        for c in &ws {
            for d in 0..3 {
                mean[d] += c[d] / n;
            }
        }
        let mut var = [0.0f64; 3];
        for c in &ws {
            for d in 0..3 {
                var[d] += (c[d] - mean[d]) * (c[d] - mean[d]) / n;
            }
        }
        for d in 0..3 {
            assert!((stats.mean[d] - mean[d]).abs() < 1e-12);
            assert!((stats.variance[d] - var[d]).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = KMeansConfig {
            k: 0,
            ..KMeansConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(matches!(
            kmeans(&[], (1, 1), &KMeansConfig::default()),
            Err(Error::EmptyInput(_))
        ));
    }
}
