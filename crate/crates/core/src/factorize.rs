//! Low-rank customer representations from a score matrix.
//!
//! An incomplete matrix goes through alternating least squares on the
//! observed entries (with a small ridge term so every per-row solve is
//! well posed). A complete matrix can instead be projected onto its top
//! right singular directions, which is the exact optimum of the same
//! objective.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::ScoreMatrix;

/// Alternating least squares settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlsConfig {
    /// Ridge coefficient on both factor norms.
    pub ridge: f64,
    /// Relative objective decrease that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            tol: 1e-8,
            max_iters: 500,
            seed: 0,
        }
    }
}

/// Factor matrices U (customers x rank) and V (categories x rank).
///
/// Only the products and the geometry of U's rows are contractual;
/// individual factors are determined up to rotation and sign.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    objective_trace: Vec<f64>,
    empty_rows: Vec<usize>,
}

impl FactorPair {
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Regularized objective after initialization and after each
    /// iteration; non-increasing.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }

    /// Customers whose rows were entirely missing; their factors are the
    /// zero vector.
    pub fn empty_rows(&self) -> &[usize] {
        &self.empty_rows
    }

    /// Predicted score for one cell.
    pub fn predict(&self, customer: usize, category: usize) -> f64 {
        self.u.row(customer).dot(&self.v.row(category))
    }

    /// Unregularized squared error over the observed entries of `scores`.
    pub fn masked_sq_error(&self, scores: &ScoreMatrix) -> Result<f64> {
        if scores.n_rows() != self.u.nrows() {
            return Err(Error::LengthMismatch {
                left_what: "score rows",
                left: scores.n_rows(),
                right_what: "customer factors",
                right: self.u.nrows(),
            });
        }
        if scores.n_cols() != self.v.nrows() {
            return Err(Error::LengthMismatch {
                left_what: "score columns",
                left: scores.n_cols(),
                right_what: "category factors",
                right: self.v.nrows(),
            });
        }
        let mut total = 0.0;
        for i in 0..scores.n_rows() {
            for b in 0..scores.n_cols() {
                if let Some(s) = scores.get(i, b) {
                    let r = s - self.predict(i, b);
                    total += r * r;
                }
            }
        }
        Ok(total)
    }

    /// Customer factor rows as plain vectors, e.g. for clustering.
    pub fn u_rows(&self) -> Vec<Vec<f64>> {
        (0..self.u.nrows())
            .map(|i| self.u.row(i).iter().cloned().collect())
            .collect()
    }

    pub fn u_to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        write_factor_csv(w, &self.u, "customer")
    }

    pub fn v_to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        write_factor_csv(w, &self.v, "category")
    }

    pub fn trace_to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.objective_trace)?)
    }
}

fn write_factor_csv<W: Write>(w: W, m: &DMatrix<f64>, entity: &str) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut header = vec![entity.to_string()];
    header.extend((0..m.ncols()).map(|j| format!("f{j}")));
    wtr.write_record(&header)?;
    for i in 0..m.nrows() {
        let mut record = vec![i.to_string()];
        record.extend(m.row(i).iter().map(|v| format!("{v:?}")));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

fn check_shape(scores: &ScoreMatrix, rank: usize) -> Result<()> {
    let (m, b) = (scores.n_rows(), scores.n_cols());
    if m == 0 || b == 0 || scores.present().iter().all(|&p| !p) {
        return Err(Error::EmptyMatrix);
    }
    let limit = m.min(b);
    if rank == 0 {
        return Err(Error::InvalidParameter {
            message: "rank must be at least 1".into(),
        });
    }
    if rank > limit {
        return Err(Error::RankTooLarge {
            rank,
            limit,
            rows: m,
            cols: b,
        });
    }
    Ok(())
}

/// Factor an incomplete score matrix by alternating ridge least squares.
///
/// Customer factors are solved first against a small random V. Every
/// column must have at least one observed entry; a fully missing row is
/// tolerated, flagged, and given the zero factor.
pub fn als_factorize(scores: &ScoreMatrix, rank: usize, config: &AlsConfig) -> Result<FactorPair> {
    check_shape(scores, rank)?;
    if !(config.ridge >= 0.0) || !config.ridge.is_finite() {
        return Err(Error::InvalidParameter {
            message: "ridge must be a finite nonnegative number".into(),
        });
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidParameter {
            message: "tol must be nonnegative".into(),
        });
    }
    if config.max_iters == 0 {
        return Err(Error::InvalidParameter {
            message: "need at least one iteration".into(),
        });
    }
    let (m, b) = (scores.n_rows(), scores.n_cols());

    let mut col_observed = vec![0usize; b];
    for i in 0..m {
        for c in 0..b {
            if scores.is_present(i, c) {
                col_observed[c] += 1;
            }
        }
    }
    if let Some(col) = col_observed.iter().position(|&n| n == 0) {
        return Err(Error::EmptyColumn { column: col });
    }
    let empty_rows: Vec<usize> = (0..m)
        .filter(|&i| scores.row_present_count(i) == 0)
        .collect();

    use rand::Rng;
    let mut rng = crate::stream::stream(config.seed, "als-init");
    let mut u = DMatrix::zeros(m, rank);
    let mut v = DMatrix::from_fn(b, rank, |_, _| rng.gen_range(-0.1..0.1));

    let objective = |u: &DMatrix<f64>, v: &DMatrix<f64>| -> f64 {
        let mut total = 0.0;
        for i in 0..m {
            for c in 0..b {
                if let Some(s) = scores.get(i, c) {
                    let r = s - u.row(i).dot(&v.row(c));
                    total += r * r;
                }
            }
        }
        total + config.ridge * (u.norm_squared() + v.norm_squared())
    };

    let mut trace = vec![objective(&u, &v)];
    for _ in 0..config.max_iters {
        solve_half(&mut u, &v, scores, config.ridge, Half::Customers)?;
        solve_half(&mut v, &u, scores, config.ridge, Half::Categories)?;
        let obj = objective(&u, &v);
        let prev = *trace.last().unwrap();
        trace.push(obj);
        if ((prev - obj) / prev.max(1e-300)).abs() < config.tol {
            break;
        }
    }

    Ok(FactorPair {
        u,
        v,
        objective_trace: trace,
        empty_rows,
    })
}

enum Half {
    Customers,
    Categories,
}

// One alternation half-step: re-solve every row of `target` against the
// fixed `other` factor by ridge least squares on the observed entries.
fn solve_half(
    target: &mut DMatrix<f64>,
    other: &DMatrix<f64>,
    scores: &ScoreMatrix,
    ridge: f64,
    half: Half,
) -> Result<()> {
    let rank = target.ncols();
    for i in 0..target.nrows() {
        let mut gram = DMatrix::zeros(rank, rank);
        let mut rhs = DVector::zeros(rank);
        let mut seen = false;
        for j in 0..other.nrows() {
            let cell = match half {
                Half::Customers => scores.get(i, j),
                Half::Categories => scores.get(j, i),
            };
            let Some(s) = cell else { continue };
            seen = true;
            let o = other.row(j);
            for a in 0..rank {
                rhs[a] += s * o[a];
                for bb in 0..rank {
                    gram[(a, bb)] += o[a] * o[bb];
                }
            }
        }
        if !seen {
            target.row_mut(i).fill(0.0);
            continue;
        }
        for a in 0..rank {
            gram[(a, a)] += ridge;
        }
        let solved = Cholesky::new(gram)
            .map(|c| c.solve(&rhs))
            .ok_or(Error::NonFinite {
                what: "least-squares system",
            })?;
        for a in 0..rank {
            target[(i, a)] = solved[a];
        }
    }
    Ok(())
}

/// Project the rows of a complete score matrix onto its top `k` right
/// singular directions.
pub fn spectral_project(scores: &ScoreMatrix, k: usize) -> Result<DMatrix<f64>> {
    if let Some((row, column)) = scores.first_missing() {
        return Err(Error::IncompleteMatrix { row, column });
    }
    check_shape(scores, k)?;
    let x = DMatrix::from_row_slice(scores.n_rows(), scores.n_cols(), scores.values());
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().unwrap();
    let basis = v_t.rows(0, k);
    Ok(&x * basis.transpose())
}

/// Top-`k` right singular directions of a complete score matrix, as rows.
/// `spectral_project` output equals the input times the transpose of this.
pub fn spectral_basis(scores: &ScoreMatrix, k: usize) -> Result<DMatrix<f64>> {
    if let Some((row, column)) = scores.first_missing() {
        return Err(Error::IncompleteMatrix { row, column });
    }
    check_shape(scores, k)?;
    let x = DMatrix::from_row_slice(scores.n_rows(), scores.n_cols(), scores.values());
    let svd = x.svd(false, true);
    Ok(svd.v_t.unwrap().rows(0, k).into_owned())
}
