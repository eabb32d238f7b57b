//! Synthetic preference graphs with known segment structure.
//!
//! Every generator draws from labeled sub-streams of the spec seed
//! ("partition", "graph", "labels"), so the segment assignment depends only
//! on (m, q, seed) and survives changes to the edge or label stages.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::classify::check_simplex;
use crate::corpus::{LabelAlphabet, PreferenceGraph};
use crate::error::{Error, Result};
use crate::stream::{stream, stream_indexed};

/// Population with a single item pool: segment k likes every item
/// independently with probability `alpha[k]`, and each customer rates a
/// random subset of items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpecInd {
    /// Customers.
    pub m: usize,
    /// Items.
    pub n: usize,
    /// Segments.
    pub k: usize,
    /// Segment proportions, a simplex of length k.
    pub q: Vec<f64>,
    /// Per-segment like probabilities, each in (0, 1).
    pub alpha: Vec<f64>,
    /// Edge probability in (0, 1]; ignored by the regular-design generator.
    pub p: f64,
    pub seed: u64,
}

impl SynthSpecInd {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one customer and one item".into(),
            });
        }
        check_segments(self.k, &self.q)?;
        if self.alpha.len() != self.k {
            return Err(Error::LengthMismatch {
                left_what: "alpha",
                left: self.alpha.len(),
                right_what: "segments",
                right: self.k,
            });
        }
        check_open_unit_slice(&self.alpha)?;
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidParameter {
                message: format!("edge probability must lie in (0, 1], got {}", self.p),
            });
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Population whose items split into categories: segment k likes items of
/// category b independently with probability `alpha[k][b]`, and each
/// customer rates exactly `ell_b[b]` items per category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpecCat {
    pub m: usize,
    /// Items per category.
    pub n_b: Vec<usize>,
    pub k: usize,
    pub q: Vec<f64>,
    /// k x B like probabilities.
    pub alpha: Vec<Vec<f64>>,
    /// Ratings per customer per category; each must satisfy
    /// 1 <= ell_b[b] <= n_b[b].
    pub ell_b: Vec<usize>,
    pub seed: u64,
}

impl SynthSpecCat {
    pub fn n_categories(&self) -> usize {
        self.n_b.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one customer".into(),
            });
        }
        let b = self.n_b.len();
        if b == 0 {
            return Err(Error::InvalidParameter {
                message: "need at least one category".into(),
            });
        }
        if self.n_b.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter {
                message: "every category needs at least one item".into(),
            });
        }
        check_segments(self.k, &self.q)?;
        if self.alpha.len() != self.k {
            return Err(Error::LengthMismatch {
                left_what: "alpha rows",
                left: self.alpha.len(),
                right_what: "segments",
                right: self.k,
            });
        }
        for row in &self.alpha {
            if row.len() != b {
                return Err(Error::LengthMismatch {
                    left_what: "alpha columns",
                    left: row.len(),
                    right_what: "categories",
                    right: b,
                });
            }
            check_open_unit_slice(row)?;
        }
        if self.ell_b.len() != b {
            return Err(Error::LengthMismatch {
                left_what: "ell_b",
                left: self.ell_b.len(),
                right_what: "categories",
                right: b,
            });
        }
        for (i, (&ell, &n)) in self.ell_b.iter().zip(&self.n_b).enumerate() {
            if ell == 0 {
                return Err(Error::InvalidParameter {
                    message: format!("category {i} needs at least one rating per customer"),
                });
            }
            if ell > n {
                return Err(Error::InvalidParameter {
                    message: format!("category {i} asks for {ell} ratings from {n} items"),
                });
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Which generator produced a [`GroundTruth`], with its full parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GenSpec {
    Independent(SynthSpecInd),
    Regular {
        #[serde(flatten)]
        base: SynthSpecInd,
        ell: usize,
    },
    Categorical(SynthSpecCat),
}

/// A generated graph together with the segment labels that produced it.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    graph: PreferenceGraph,
    z: Vec<usize>,
    spec: GenSpec,
}

impl GroundTruth {
    pub fn graph(&self) -> &PreferenceGraph {
        &self.graph
    }

    /// True segment of each customer, aligned with graph row order.
    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn spec(&self) -> &GenSpec {
        &self.spec
    }

    pub fn into_parts(self) -> (PreferenceGraph, Vec<usize>, GenSpec) {
        (self.graph, self.z, self.spec)
    }

    /// Write a `customer,true_segment` CSV in graph row order.
    pub fn segments_to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(["customer", "true_segment"])?;
        for (i, &zi) in self.z.iter().enumerate() {
            wtr.write_record([self.graph.customer_id(i), &zi.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn segments_to_csv<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.segments_to_csv_writer(std::io::BufWriter::new(file))
    }
}

fn check_segments(k: usize, q: &[f64]) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            message: "need at least one segment".into(),
        });
    }
    if q.len() != k {
        return Err(Error::LengthMismatch {
            left_what: "proportions",
            left: q.len(),
            right_what: "segments",
            right: k,
        });
    }
    check_simplex(q)
}

fn check_open_unit_slice(a: &[f64]) -> Result<()> {
    for &x in a {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::InvalidParameter {
                message: format!("like probability must lie strictly inside (0, 1), got {x}"),
            });
        }
    }
    Ok(())
}

/// Largest-remainder apportionment of m customers to proportions q.
/// Guarantees |count_k - m q_k| < 1 and a total of exactly m.
fn segment_counts(m: usize, q: &[f64]) -> Vec<usize> {
    let targets: Vec<f64> = q.iter().map(|&qk| m as f64 * qk).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for t in 0..m.saturating_sub(assigned) {
        counts[order[t % q.len()]] += 1;
    }
    counts
}

/// Segment label per customer: largest-remainder counts, then a seeded
/// shuffle. Depends only on (m, q, seed), so regenerating the same
/// population with different edge parameters keeps the same membership.
fn draw_partition(m: usize, q: &[f64], seed: u64) -> Vec<usize> {
    let counts = segment_counts(m, q);
    let mut z = Vec::with_capacity(m);
    for (k, &c) in counts.iter().enumerate() {
        z.extend(std::iter::repeat(k).take(c));
    }
    z.shuffle(&mut stream(seed, "partition"));
    z
}

fn label_row(
    items: &[u32],
    alpha: f64,
    like: u32,
    rng: &mut impl Rng,
) -> Vec<(u32, u32)> {
    items
        .iter()
        .map(|&j| {
            let l = if rng.gen::<f64>() < alpha { like } else { 1 - like };
            (j, l)
        })
        .collect()
}

fn assemble(
    rows: Vec<Vec<(u32, u32)>>,
    n_b: &[usize],
    z: Vec<usize>,
    spec: GenSpec,
) -> Result<GroundTruth> {
    let m = rows.len();
    let n: usize = n_b.iter().sum();
    let mut category_of = Vec::with_capacity(n);
    for (b, &nb) in n_b.iter().enumerate() {
        category_of.extend(std::iter::repeat(b as u32).take(nb));
    }
    let customer_ids = (0..m).map(|i| format!("c{i}")).collect();
    let item_ids = (0..n).map(|j| format!("i{j}")).collect();
    let category_ids = (0..n_b.len()).map(|b| format!("cat{b}")).collect();
    let graph = PreferenceGraph::from_parts(
        LabelAlphabet::binary(),
        category_of,
        rows,
        customer_ids,
        item_ids,
        category_ids,
    )?;
    Ok(GroundTruth { graph, z, spec })
}

/// Generate a single-category population where each (customer, item) edge
/// appears independently with probability `spec.p` and every edge of a
/// segment-k customer is liked with probability `alpha[k]`.
pub fn gen_lc_ind(spec: &SynthSpecInd) -> Result<GroundTruth> {
    spec.validate()?;
    let like = binary_like();
    let z = draw_partition(spec.m, &spec.q, spec.seed);
    let mut rows = Vec::with_capacity(spec.m);
    for (i, &zi) in z.iter().enumerate() {
        let mut graph_rng = stream_indexed(spec.seed, "graph", i as u64);
        let items: Vec<u32> = (0..spec.n as u32)
            .filter(|_| graph_rng.gen::<f64>() < spec.p)
            .collect();
        let mut label_rng = stream_indexed(spec.seed, "labels", i as u64);
        rows.push(label_row(&items, spec.alpha[zi], like, &mut label_rng));
    }
    assemble(rows, &[spec.n], z, GenSpec::Independent(spec.clone()))
}

/// Like [`gen_lc_ind`] but every customer rates a uniform random
/// `ell`-subset of the items; `spec.p` is ignored.
pub fn gen_lc_ind_regular(spec: &SynthSpecInd, ell: usize) -> Result<GroundTruth> {
    spec.validate()?;
    check_subset_size(ell, spec.n, 0)?;
    let like = binary_like();
    let z = draw_partition(spec.m, &spec.q, spec.seed);
    let mut rows = Vec::with_capacity(spec.m);
    for (i, &zi) in z.iter().enumerate() {
        let mut graph_rng = stream_indexed(spec.seed, "graph", i as u64);
        let items = draw_subset(spec.n, ell, 0, &mut graph_rng);
        let mut label_rng = stream_indexed(spec.seed, "labels", i as u64);
        rows.push(label_row(&items, spec.alpha[zi], like, &mut label_rng));
    }
    assemble(
        rows,
        &[spec.n],
        z,
        GenSpec::Regular { base: spec.clone(), ell },
    )
}

/// Generate a categorical population: items are grouped into contiguous
/// category blocks, each customer rates a uniform `ell_b`-subset per
/// category, and likes follow `alpha[z_i][b]`.
pub fn gen_lc_ind_cat(spec: &SynthSpecCat) -> Result<GroundTruth> {
    spec.validate()?;
    let like = binary_like();
    let z = draw_partition(spec.m, &spec.q, spec.seed);
    let mut offsets = Vec::with_capacity(spec.n_b.len());
    let mut total = 0usize;
    for &nb in &spec.n_b {
        offsets.push(total);
        total += nb;
    }
    let mut rows = Vec::with_capacity(spec.m);
    for (i, &zi) in z.iter().enumerate() {
        let mut graph_rng = stream_indexed(spec.seed, "graph", i as u64);
        let mut label_rng = stream_indexed(spec.seed, "labels", i as u64);
        let mut row = Vec::new();
        for (b, (&nb, &ell)) in spec.n_b.iter().zip(&spec.ell_b).enumerate() {
            let items = draw_subset(nb, ell, offsets[b], &mut graph_rng);
            row.extend(label_row(&items, spec.alpha[zi][b], like, &mut label_rng));
        }
        rows.push(row);
    }
    assemble(rows, &spec.n_b, z, GenSpec::Categorical(spec.clone()))
}

fn binary_like() -> u32 {
    LabelAlphabet::binary()
        .like_index()
        .expect("built-in binary alphabet") as u32
}

fn check_subset_size(ell: usize, n: usize, category: usize) -> Result<()> {
    if ell == 0 {
        return Err(Error::InvalidParameter {
            message: format!("category {category} needs at least one rating per customer"),
        });
    }
    if ell > n {
        return Err(Error::InvalidParameter {
            message: format!("category {category} asks for {ell} ratings from {n} items"),
        });
    }
    Ok(())
}

/// Uniform ell-subset of {offset, ..., offset + n - 1}, ascending.
fn draw_subset(n: usize, ell: usize, offset: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut pool: Vec<u32> = (0..n as u32).map(|j| j + offset as u32).collect();
    let (chosen, _) = pool.partial_shuffle(rng, ell);
    let mut items = chosen.to_vec();
    items.sort_unstable();
    items
}

/// Benchmark-grid model family: k like probabilities spaced uniformly over
/// [0.05, 0.95], proportions drawn from a symmetric Dirichlet that favors
/// balance, 2000 customers, 100 items, and edge probability 1 - sparsity.
///
/// Proportions come from the "proportions" sub-stream of `seed`, so every
/// call with a fresh seed resamples q; reuse the returned spec to hold q
/// fixed across replications instead.
pub fn sample_table1_model(k: usize, sparsity: f64, seed: u64) -> Result<SynthSpecInd> {
    if k < 2 {
        return Err(Error::InvalidParameter {
            message: format!("the benchmark grid needs at least two segments, got {k}"),
        });
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidParameter {
            message: format!("sparsity must lie in [0, 1), got {sparsity}"),
        });
    }
    let alpha: Vec<f64> = (0..k)
        .map(|j| 0.05 + 0.9 * j as f64 / (k - 1) as f64)
        .collect();
    let mut rng = stream(seed, "proportions");
    let gamma = Gamma::new(k as f64 + 1.0, 1.0).expect("positive shape");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
    let total: f64 = draws.iter().sum();
    let q = draws.iter().map(|g| g / total).collect();
    Ok(SynthSpecInd {
        m: 2000,
        n: 100,
        k,
        q,
        alpha,
        p: 1.0 - sparsity,
        seed,
    })
}
