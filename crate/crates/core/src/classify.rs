//! Nearest-center classification of projection scores.
//!
//! Segments with like-probability alpha sit, in expectation, at the score
//! center H(alpha, alpha_pool) / H(alpha_pool) under entropy normalization.
//! A `CenterSet` holds those per-segment, per-category centers, either
//! derived from known generating parameters or taken from clustering
//! output, and the classifiers assign each customer to the nearest center
//! in relative distance.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::projection::{ScoreMatrix, ScoreVector};

/// A pooled like-fraction this close to 1/2 is treated as degenerate.
pub const DEGENERATE_POOL_TOL: f64 = 1e-9;

/// Cross-entropy H(b1, b2) = -(b1 ln b2 + (1-b1) ln(1-b2)) in nats.
pub fn cross_entropy(b1: f64, b2: f64) -> Result<f64> {
    check_open_unit(b1, "cross-entropy first argument")?;
    check_open_unit(b2, "cross-entropy second argument")?;
    Ok(cross_entropy_unchecked(b1, b2))
}

/// Binary entropy H(p) in nats. Equals `cross_entropy(p, p)`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_open_unit(p, "entropy argument")?;
    Ok(binary_entropy_unchecked(p))
}

fn check_open_unit(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidParameter {
            message: format!("{what} must lie strictly inside (0, 1), got {x}"),
        });
    }
    Ok(())
}

pub(crate) fn cross_entropy_unchecked(b1: f64, b2: f64) -> f64 {
    -(b1 * b2.ln() + (1.0 - b1) * (1.0 - b2).ln())
}

// Routed through cross_entropy so H(p) and H(p, p) are bitwise equal.
pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    cross_entropy_unchecked(p, p)
}

/// Per-segment score centers, one coordinate per category.
///
/// Centers built from generating parameters also carry the parameters and
/// the implied pooled like-fractions, which the separation constants need.
/// A category whose pooled like-fraction is 1/2 (within 1e-9) is flagged
/// degenerate and its centers are pinned at the analytic limit 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterSet {
    h: Vec<Vec<f64>>,
    alpha: Option<Vec<Vec<f64>>>,
    alpha_pool: Option<Vec<f64>>,
    degenerate: Vec<bool>,
}

impl CenterSet {
    /// Centers implied by per-segment like-probabilities `alpha` (one row
    /// per segment, one column per category) mixed with proportions `q`.
    pub fn theoretical(alpha: &[Vec<f64>], q: &[f64]) -> Result<Self> {
        let k = alpha.len();
        if k == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one segment".into(),
            });
        }
        let b = alpha[0].len();
        if b == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one category".into(),
            });
        }
        for (row_idx, row) in alpha.iter().enumerate() {
            if row.len() != b {
                return Err(Error::InvalidParameter {
                    message: format!(
                        "segment {row_idx} has {} category parameters, expected {b}",
                        row.len()
                    ),
                });
            }
            for &a in row {
                check_open_unit(a, "segment like-probability")?;
            }
        }
        if q.len() != k {
            return Err(Error::LengthMismatch {
                left_what: "mixing proportions",
                left: q.len(),
                right_what: "segments",
                right: k,
            });
        }
        check_simplex(q)?;

        let mut alpha_pool = vec![0.0; b];
        for (row, &qk) in alpha.iter().zip(q) {
            for (pool, &a) in alpha_pool.iter_mut().zip(row) {
                *pool += qk * a;
            }
        }
        let degenerate: Vec<bool> = alpha_pool
            .iter()
            .map(|&p| (p - 0.5).abs() <= DEGENERATE_POOL_TOL)
            .collect();
        let h = alpha
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(cat, &a)| {
                        if degenerate[cat] {
                            // H(a, p)/H(p) -> 1 as p -> 1/2, for every a.
                            1.0
                        } else {
                            cross_entropy_unchecked(a, alpha_pool[cat])
                                / binary_entropy_unchecked(alpha_pool[cat])
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            h,
            alpha: Some(alpha.to_vec()),
            alpha_pool: Some(alpha_pool),
            degenerate,
        })
    }

    /// Centers taken as-is, e.g. cluster centers from a fitted
    /// segmentation. No generating parameters are attached.
    pub fn empirical(h: Vec<Vec<f64>>) -> Result<Self> {
        let k = h.len();
        if k == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one center".into(),
            });
        }
        let b = h[0].len();
        if b == 0 {
            return Err(Error::InvalidParameter {
                message: "centers need at least one coordinate".into(),
            });
        }
        for (idx, row) in h.iter().enumerate() {
            if row.len() != b {
                return Err(Error::InvalidParameter {
                    message: format!("center {idx} has {} coordinates, expected {b}", row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "center coordinate" });
            }
        }
        Ok(Self {
            h,
            alpha: None,
            alpha_pool: None,
            degenerate: vec![false; b],
        })
    }

    pub fn n_segments(&self) -> usize {
        self.h.len()
    }

    pub fn n_categories(&self) -> usize {
        self.h[0].len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.h
    }

    pub fn center(&self, segment: usize) -> &[f64] {
        &self.h[segment]
    }

    /// Generating like-probabilities, when known.
    pub fn alpha(&self) -> Option<&[Vec<f64>]> {
        self.alpha.as_deref()
    }

    /// Pooled like-fraction per category, when known.
    pub fn alpha_pool(&self) -> Option<&[f64]> {
        self.alpha_pool.as_deref()
    }

    pub fn is_degenerate(&self, category: usize) -> bool {
        self.degenerate[category]
    }

    /// Keep only the given categories, in the given order.
    pub fn restricted(&self, keep: &[usize]) -> Result<CenterSet> {
        if keep.is_empty() {
            return Err(Error::InvalidParameter {
                message: "must keep at least one category".into(),
            });
        }
        let b = self.n_categories();
        for &c in keep {
            if c >= b {
                return Err(Error::IndexOutOfRange {
                    what: "category",
                    index: c,
                    len: b,
                });
            }
        }
        let select = |row: &Vec<f64>| keep.iter().map(|&c| row[c]).collect::<Vec<f64>>();
        Ok(CenterSet {
            h: self.h.iter().map(select).collect(),
            alpha: self.alpha.as_ref().map(|a| a.iter().map(select).collect()),
            alpha_pool: self
                .alpha_pool
                .as_ref()
                .map(|p| keep.iter().map(|&c| p[c]).collect()),
            degenerate: keep.iter().map(|&c| self.degenerate[c]).collect(),
        })
    }
}

pub(crate) fn check_simplex(q: &[f64]) -> Result<()> {
    if q.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidSimplex {
            message: format!("{q:?}"),
        });
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSimplex {
            message: format!("sum is {total}"),
        });
    }
    Ok(())
}

/// Options for [`nn_classify_vector`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ClassifyOptions {
    /// Classify customers with partially missing rows on their observed
    /// categories instead of failing.
    pub allow_partial_rows: bool,
}

/// Assign each scored customer to the center minimizing |s - h| / h.
///
/// Requires single-category, non-degenerate, positive centers. Ties go to
/// the lowest segment index; unscored customers come back as None.
pub fn nn_classify_scalar(
    scores: &ScoreVector,
    centers: &CenterSet,
) -> Result<Vec<Option<usize>>> {
    if centers.n_categories() != 1 {
        return Err(Error::InvalidParameter {
            message: format!(
                "scalar classification needs single-category centers, got {}",
                centers.n_categories()
            ),
        });
    }
    if centers.is_degenerate(0) {
        return Err(Error::DegenerateCenters);
    }
    if centers.h.iter().any(|row| row[0] <= 0.0) {
        return Err(Error::DegenerateCenters);
    }
    let assignments = (0..scores.len())
        .map(|i| {
            scores.get(i).map(|s| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, row) in centers.h.iter().enumerate() {
                    let d = (s - row[0]).abs() / row[0];
                    if d < best_d {
                        best = k;
                        best_d = d;
                    }
                }
                best
            })
        })
        .collect();
    Ok(assignments)
}

/// Assign each customer to the center minimizing relative L1 distance
/// sum_b |s_b - h_b| / sum_b |h_b| over the compared categories.
///
/// A customer with no scored categories at all is excluded (None). A
/// partially scored row is an error unless `allow_partial_rows` is set, in
/// which case the distance restricts to the observed categories.
pub fn nn_classify_vector(
    scores: &ScoreMatrix,
    centers: &CenterSet,
    options: &ClassifyOptions,
) -> Result<Vec<Option<usize>>> {
    let b = centers.n_categories();
    if scores.n_cols() != b {
        return Err(Error::LengthMismatch {
            left_what: "score categories",
            left: scores.n_cols(),
            right_what: "center categories",
            right: b,
        });
    }
    let mut assignments = Vec::with_capacity(scores.n_rows());
    let mut observed = Vec::with_capacity(b);
    for i in 0..scores.n_rows() {
        observed.clear();
        observed.extend((0..b).filter(|&cat| scores.is_present(i, cat)));
        if observed.is_empty() {
            assignments.push(None);
            continue;
        }
        if observed.len() < b && !options.allow_partial_rows {
            let missing = (0..b).find(|&cat| !scores.is_present(i, cat)).unwrap();
            return Err(Error::MissingCategoryScore {
                customer: i,
                category: missing,
            });
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, row) in centers.h.iter().enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            for &cat in &observed {
                num += (scores.get(i, cat).unwrap() - row[cat]).abs();
                den += row[cat].abs();
            }
            if den <= 0.0 {
                return Err(Error::DegenerateCenters);
            }
            let d = num / den;
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        assignments.push(Some(best));
    }
    Ok(assignments)
}

/// Separation constants of a segment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationConstants {
    /// Minimum adjacent gap between sorted like-probabilities (single
    /// category only).
    pub min_gap: Option<f64>,
    /// Relative score separation between adjacent centers (single
    /// category only).
    pub scalar_margin: Option<f64>,
    /// Per-category log-odds weight of the pooled like-fraction;
    /// degenerate categories weigh zero.
    pub category_weights: Vec<f64>,
    /// Minimum weighted L1 distance between segment parameter vectors.
    pub weighted_min_gap: f64,
    /// Relative score separation in the vector setting.
    pub vector_margin: f64,
    /// Distance from the most extreme like-probability to {0, 1}.
    pub alpha_min: f64,
}

/// Compute the separation constants for centers built with
/// [`CenterSet::theoretical`]. Exactly duplicated parameters are rejected,
/// as is a single-category configuration with a degenerate pool.
pub fn separation_constants(centers: &CenterSet) -> Result<SeparationConstants> {
    let alpha = centers.alpha().ok_or_else(|| Error::InvalidParameter {
        message: "separation constants need generating parameters; use theoretical centers".into(),
    })?;
    let pools = centers.alpha_pool().unwrap();
    let k = alpha.len();
    let b = pools.len();
    if k < 2 {
        return Err(Error::InvalidParameter {
            message: "separation constants need at least two segments".into(),
        });
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in alpha {
        for &a in row {
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    let alpha_min = lo.min(1.0 - hi);

    let mut min_gap = None;
    let mut scalar_margin = None;
    if b == 1 {
        if centers.is_degenerate(0) {
            return Err(Error::DegenerateCenters);
        }
        let mut sorted: Vec<f64> = alpha.iter().map(|row| row[0]).collect();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut gap = f64::INFINITY;
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::EqualParameters { value: pair[0] });
            }
            gap = gap.min(pair[1] - pair[0]);
        }
        min_gap = Some(gap);
        let w = (pools[0] / (1.0 - pools[0])).ln().abs();
        scalar_margin = Some(gap / 2.0 * w / alpha_min.ln().abs());
    }

    let category_weights: Vec<f64> = pools
        .iter()
        .enumerate()
        .map(|(cat, &p)| {
            if centers.is_degenerate(cat) {
                0.0
            } else {
                (p / (1.0 - p)).ln().abs()
            }
        })
        .collect();
    if category_weights.iter().all(|&w| w == 0.0) {
        return Err(Error::ZeroWeights);
    }

    let mut weighted_min_gap = f64::INFINITY;
    for k1 in 0..k {
        for k2 in k1 + 1..k {
            let dist: f64 = (0..b)
                .map(|cat| category_weights[cat] * (alpha[k1][cat] - alpha[k2][cat]).abs())
                .sum();
            if dist == 0.0 {
                return Err(Error::InvalidParameter {
                    message: format!(
                        "segments {k1} and {k2} coincide on every weighted category"
                    ),
                });
            }
            weighted_min_gap = weighted_min_gap.min(dist);
        }
    }
    let vector_margin = weighted_min_gap / (2.0 * b as f64)
        * ((1.0 - alpha_min).ln() / alpha_min.ln()).abs();

    Ok(SeparationConstants {
        min_gap,
        scalar_margin,
        category_weights,
        weighted_min_gap,
        vector_margin,
        alpha_min,
    })
}
