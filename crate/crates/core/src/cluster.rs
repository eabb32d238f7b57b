//! Clustering of projection scores and density-based segment counting.
//!
//! Scores go through standard k-means (k-means++ seeding, Lloyd updates,
//! best of several restarts). When the segment count is unknown it is
//! estimated by counting peaks of a Gaussian kernel density estimate of
//! the scores.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::CenterSet;
use crate::error::{Error, Result};

/// k-means search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansConfig {
    pub n_restarts: usize,
    pub max_iters: usize,
    /// Absolute inertia change that counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            n_restarts: 10,
            max_iters: 300,
            tol: 1e-9,
            seed: 0,
        }
    }
}

/// A hard assignment of customers to segments.
///
/// `labels` has one entry per customer; None marks customers excluded from
/// clustering (no score). `centers` are the segment centers in the score
/// space that was clustered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segmentation {
    labels: Vec<Option<usize>>,
    centers: Vec<Vec<f64>>,
    inertia: f64,
    k: usize,
}

impl Segmentation {
    pub fn from_parts(
        labels: Vec<Option<usize>>,
        centers: Vec<Vec<f64>>,
        inertia: f64,
    ) -> Result<Self> {
        let k = centers.len();
        if k == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one center".into(),
            });
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "segment center" });
        }
        if !(inertia >= 0.0) || !inertia.is_finite() {
            return Err(Error::NonFinite { what: "inertia" });
        }
        for label in self::present(&labels) {
            if label >= k {
                return Err(Error::IndexOutOfRange {
                    what: "segment label",
                    index: label,
                    len: k,
                });
            }
        }
        Ok(Self {
            labels,
            centers,
            inertia,
            k,
        })
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, customer: usize) -> Option<usize> {
        self.labels[customer]
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn center(&self, segment: usize) -> &[f64] {
        &self.centers[segment]
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_customers(&self) -> usize {
        self.labels.len()
    }

    pub fn n_assigned(&self) -> usize {
        self.labels.iter().flatten().count()
    }

    /// Spread the labels over `m` customers: entry `indices[p]` receives
    /// the label of clustered point `p`, everyone else is excluded. Used
    /// after clustering only the scored customers.
    pub fn with_customer_map(&self, indices: &[usize], m: usize) -> Result<Segmentation> {
        if indices.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                left_what: "index map",
                left: indices.len(),
                right_what: "clustered points",
                right: self.labels.len(),
            });
        }
        let mut labels = vec![None; m];
        for (&customer, &label) in indices.iter().zip(&self.labels) {
            if customer >= m {
                return Err(Error::IndexOutOfRange {
                    what: "customer",
                    index: customer,
                    len: m,
                });
            }
            labels[customer] = label;
        }
        Ok(Segmentation {
            labels,
            centers: self.centers.clone(),
            inertia: self.inertia,
            k: self.k,
        })
    }

    /// The cluster centers as an empirical center set for nearest-center
    /// classification.
    pub fn center_set(&self) -> Result<CenterSet> {
        CenterSet::empirical(self.centers.clone())
    }

    /// Write `customer,segment` rows; excluded customers are omitted.
    /// Customers are named by `customer_ids` when given, else by index.
    pub fn to_csv_writer<W: Write>(&self, w: W, customer_ids: Option<&[String]>) -> Result<()> {
        if let Some(ids) = customer_ids {
            if ids.len() != self.labels.len() {
                return Err(Error::LengthMismatch {
                    left_what: "customer ids",
                    left: ids.len(),
                    right_what: "labels",
                    right: self.labels.len(),
                });
            }
        }
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(["customer", "segment"])?;
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(z) = label {
                let name = match customer_ids {
                    Some(ids) => ids[i].clone(),
                    None => i.to_string(),
                };
                wtr.write_record([name, z.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv<P: AsRef<Path>>(&self, path: P, customer_ids: Option<&[String]>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file), customer_ids)
    }
}

fn present(labels: &[Option<usize>]) -> impl Iterator<Item = usize> + '_ {
    labels.iter().filter_map(|l| *l)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn nearest_center(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Best-of-restarts Lloyd's algorithm with k-means++ seeding.
///
/// Assignment ties break toward the lowest center index; a cluster left
/// empty is refilled with the point farthest from its center; the best
/// restart is the lexicographically smallest (inertia, restart index).
/// Output is invariant under permutation of the input points: clustering
/// runs on an internal canonical ordering.
pub fn kmeans(points: &[Vec<f64>], k: usize, config: &KmeansConfig) -> Result<Segmentation> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            message: "k must be at least 1".into(),
        });
    }
    let n = points.len();
    if n < k {
        return Err(Error::TooFewPoints {
            k,
            needed: k,
            got: n,
        });
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter {
            message: "points need at least one coordinate".into(),
        });
    }
    for p in points {
        if p.len() != dim {
            return Err(Error::LengthMismatch {
                left_what: "point dimension",
                left: p.len(),
                right_what: "first point dimension",
                right: dim,
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "kmeans input" });
        }
    }
    if config.n_restarts == 0 || config.max_iters == 0 {
        return Err(Error::InvalidParameter {
            message: "kmeans needs at least one restart and one iteration".into(),
        });
    }

    // Canonical point order makes the whole search, and therefore the
    // result, independent of how the caller ordered the input.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted: Vec<&[f64]> = order.iter().map(|&i| points[i].as_slice()).collect();

    let mut best: Option<(f64, Vec<usize>, Vec<Vec<f64>>)> = None;
    for restart in 0..config.n_restarts {
        let mut rng = crate::stream::stream_indexed(config.seed, "kmeans-restart", restart as u64);
        let centers = seed_plus_plus(&sorted, k, &mut rng);
        let (inertia, labels, centers) = lloyd(&sorted, centers, config);
        let better = match &best {
            None => true,
            Some((b, _, _)) => inertia < *b,
        };
        if better {
            best = Some((inertia, labels, centers));
        }
    }
    let (inertia, sorted_labels, centers) = best.unwrap();

    let mut labels = vec![None; n];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = Some(sorted_labels[pos]);
    }
    Ok(Segmentation {
        labels,
        centers,
        inertia,
        k,
    })
}

fn seed_plus_plus(
    points: &[&[f64]],
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<f64>> {
    use rand::Rng;
    let n = points.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // Every point coincides with a center already; any choice is
            // equivalent.
            rng.gen_range(0..n)
        };
        centers.push(points[next].to_vec());
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

fn lloyd(
    points: &[&[f64]],
    mut centers: Vec<Vec<f64>>,
    config: &KmeansConfig,
) -> (f64, Vec<usize>, Vec<Vec<f64>>) {
    let n = points.len();
    let k = centers.len();
    let mut labels = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    let mut inertia = f64::INFINITY;
    for _ in 0..config.max_iters {
        for (i, p) in points.iter().enumerate() {
            labels[i] = nearest_center(p, &centers);
        }
        refill_empty(points, &mut labels, &centers, k);

        let mut counts = vec![0usize; k];
        for c in centers.iter_mut() {
            c.fill(0.0);
        }
        for (p, &z) in points.iter().zip(&labels) {
            counts[z] += 1;
            for (acc, &x) in centers[z].iter_mut().zip(*p) {
                *acc += x;
            }
        }
        for (c, &count) in centers.iter_mut().zip(&counts) {
            debug_assert!(count > 0);
            for v in c.iter_mut() {
                *v /= count as f64;
            }
        }

        inertia = points
            .iter()
            .zip(&labels)
            .map(|(p, &z)| sq_dist(p, &centers[z]))
            .sum();
        if (prev_inertia - inertia).abs() <= config.tol {
            break;
        }
        prev_inertia = inertia;
    }
    (inertia, labels, centers)
}

// Give every empty cluster the point currently farthest from its center,
// stealing only from clusters that keep at least one member.
fn refill_empty(points: &[&[f64]], labels: &mut [usize], centers: &[Vec<f64>], k: usize) {
    let mut counts = vec![0usize; k];
    for &z in labels.iter() {
        counts[z] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centers[labels[i]]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        if let Some(i) = far {
            counts[labels[i]] -= 1;
            labels[i] = empty;
            counts[empty] += 1;
        }
    }
}

/// Kernel density estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensityConfig {
    pub grid_size: usize,
    /// A local maximum must reach this fraction of the global maximum to
    /// count as a peak.
    pub peak_threshold: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            grid_size: 512,
            peak_threshold: 1e-3,
        }
    }
}

/// A Gaussian KDE evaluated on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityEstimate {
    grid: Vec<f64>,
    density: Vec<f64>,
    bandwidth: f64,
    peaks: Vec<usize>,
}

impl DensityEstimate {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Grid indices of the strict interior local maxima above threshold,
    /// ascending.
    pub fn peaks(&self) -> &[usize] {
        &self.peaks
    }

    pub fn n_peaks(&self) -> usize {
        self.peaks.len()
    }

    /// Trapezoidal integral over the grid; close to 1 by construction.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }

    /// Write `score,density` rows for external plotting.
    pub fn to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(["score", "density"])?;
        for (x, y) in self.grid.iter().zip(&self.density) {
            wtr.write_record([format!("{x:?}"), format!("{y:?}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}

fn sample_std(scores: &[f64]) -> f64 {
    let m = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / m;
    let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
    (ss / (m - 1.0)).sqrt()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Gaussian KDE with the Silverman rule-of-thumb bandwidth
/// 0.9 min(std, IQR/1.34) m^(-1/5).
///
/// A zero IQR (heavily tied scores) falls back to the standard deviation
/// alone; fully identical scores are an error.
pub fn estimate_density(scores: &[f64], config: &DensityConfig) -> Result<DensityEstimate> {
    if config.grid_size < 4 {
        return Err(Error::InvalidParameter {
            message: "grid size must be at least 4".into(),
        });
    }
    if !(config.peak_threshold >= 0.0 && config.peak_threshold <= 1.0) {
        return Err(Error::InvalidParameter {
            message: "peak threshold must lie in [0, 1]".into(),
        });
    }
    if scores.is_empty() {
        return Err(Error::InvalidParameter {
            message: "no scores to estimate a density from".into(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { what: "density input" });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::IdenticalScores);
    }

    let m = scores.len();
    let std = sample_std(scores);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    let h = 0.9 * spread * (m as f64).powf(-0.2);

    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[m - 1] + 3.0 * h;
    let g = config.grid_size;
    let step = (hi - lo) / (g - 1) as f64;
    let grid: Vec<f64> = (0..g).map(|t| lo + step * t as f64).collect();

    let norm = 1.0 / (m as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let sum: f64 = scores
                .iter()
                .map(|&s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            norm * sum
        })
        .collect();

    let max_density = density.iter().cloned().fold(0.0f64, f64::max);
    let floor = config.peak_threshold * max_density;
    let peaks: Vec<usize> = (1..g - 1)
        .filter(|&t| {
            density[t] > density[t - 1] && density[t] > density[t + 1] && density[t] >= floor
        })
        .collect();

    Ok(DensityEstimate {
        grid,
        density,
        bandwidth: h,
        peaks,
    })
}

/// Number of segments suggested by the score density: its peak count.
pub fn estimate_k(scores: &[f64], config: &DensityConfig) -> Result<usize> {
    Ok(estimate_density(scores, config)?.n_peaks())
}

/// How to put segment labels into canonical order.
#[derive(Debug, Clone, Copy)]
pub enum AlignMode<'a> {
    /// Ascending by the given per-segment like-probability estimates.
    ByAlpha(&'a [f64]),
    /// By score center: ascending when the pooled like-fraction is below
    /// 1/2, descending when above.
    ByScore { alpha_pool: f64 },
}

/// Relabel segments into the canonical order for comparison across
/// methods. Errors when `ByScore` is asked to orient around a pooled
/// like-fraction of exactly 1/2.
pub fn align_labels(seg: &Segmentation, mode: AlignMode) -> Result<Segmentation> {
    let k = seg.k();
    let keys: Vec<f64> = match mode {
        AlignMode::ByAlpha(alphas) => {
            if alphas.len() != k {
                return Err(Error::LengthMismatch {
                    left_what: "alpha estimates",
                    left: alphas.len(),
                    right_what: "segments",
                    right: k,
                });
            }
            if alphas.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFinite { what: "alpha estimate" });
            }
            alphas.to_vec()
        }
        AlignMode::ByScore { alpha_pool } => {
            if (alpha_pool - 0.5).abs() <= crate::classify::DEGENERATE_POOL_TOL {
                return Err(Error::DegenerateDirection);
            }
            let sign = if alpha_pool < 0.5 { 1.0 } else { -1.0 };
            seg.centers
                .iter()
                .map(|c| sign * c.iter().sum::<f64>() / c.len() as f64)
                .collect()
        }
    };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap());
    let mut new_label_of = vec![0usize; k];
    for (pos, &old) in order.iter().enumerate() {
        new_label_of[old] = pos;
    }
    Ok(Segmentation {
        labels: seg
            .labels
            .iter()
            .map(|l| l.map(|z| new_label_of[z]))
            .collect(),
        centers: order.iter().map(|&old| seg.centers[old].clone()).collect(),
        inertia: seg.inertia,
        k,
    })
}

/// Percentage of non-excluded customers whose label matches the truth.
pub fn accuracy(assigned: &[Option<usize>], truth: &[usize]) -> Result<f64> {
    if assigned.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left_what: "assigned labels",
            left: assigned.len(),
            right_what: "true labels",
            right: truth.len(),
        });
    }
    let mut evaluated = 0usize;
    let mut matches = 0usize;
    for (a, &t) in assigned.iter().zip(truth) {
        if let Some(z) = a {
            evaluated += 1;
            if *z == t {
                matches += 1;
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::NothingToEvaluate);
    }
    Ok(100.0 * matches as f64 / evaluated as f64)
}
