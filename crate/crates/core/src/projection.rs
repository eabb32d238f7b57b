//! Projection scores.
//!
//! A customer's projection score is the normalized information content of
//! their observations under the pooled model: the sum of `-log f_pool` over
//! the observed items divided either by the observation count (degree
//! normalization) or by the summed entropies of the observed items (entropy
//! normalization). Entropy-normalized scores concentrate near 1 for
//! customers who look like the pool.
//!
//! Customers without observations get no score; they are marked missing and
//! carried through instead of failing the run.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PreferenceGraph;
use crate::error::{Error, Result};
use crate::pooled::PooledModel;

const MIN_ENTROPY_DENOMINATOR: f64 = 1e-12;

/// Per-customer scores with an explicit missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    values: Vec<f64>,
    present: Vec<bool>,
}

impl ScoreVector {
    pub fn from_parts(values: Vec<f64>, present: Vec<bool>) -> Result<Self> {
        if values.len() != present.len() {
            return Err(Error::LengthMismatch {
                left_what: "values",
                left: values.len(),
                right_what: "present",
                right: present.len(),
            });
        }
        Ok(Self { values, present })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.present[i].then(|| self.values[i])
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.present[i]
    }

    /// Raw values; entries where `present` is false are meaningless.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn n_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }

    /// Scores of the present customers, in customer order.
    pub fn present_values(&self) -> Vec<f64> {
        (0..self.len()).filter_map(|i| self.get(i)).collect()
    }

    /// Customer indices with a score, in order.
    pub fn present_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.present[i]).collect()
    }
}

/// Customer-by-category score matrix with a missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    present: Vec<bool>,
}

impl ScoreMatrix {
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        values: Vec<f64>,
        present: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::LengthMismatch {
                left_what: "values",
                left: values.len(),
                right_what: "rows*cols",
                right: n_rows * n_cols,
            });
        }
        if present.len() != values.len() {
            return Err(Error::LengthMismatch {
                left_what: "present",
                left: present.len(),
                right_what: "values",
                right: values.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            present,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let idx = row * self.n_cols + col;
        self.present[idx].then(|| self.values[idx])
    }

    pub fn is_present(&self, row: usize, col: usize) -> bool {
        self.present[row * self.n_cols + col]
    }

    /// Row-major values; entries where the mask is false are meaningless.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn present(&self) -> &[bool] {
        &self.present
    }

    pub fn is_complete(&self) -> bool {
        self.present.iter().all(|&p| p)
    }

    pub fn first_missing(&self) -> Option<(usize, usize)> {
        self.present
            .iter()
            .position(|&p| !p)
            .map(|idx| (idx / self.n_cols, idx % self.n_cols))
    }

    pub fn row_present_count(&self, row: usize) -> usize {
        (0..self.n_cols)
            .filter(|&b| self.present[row * self.n_cols + b])
            .count()
    }

    /// One category's scores as a vector over all customers.
    pub fn column(&self, col: usize) -> ScoreVector {
        let values = (0..self.n_rows)
            .map(|i| self.values[i * self.n_cols + col])
            .collect();
        let present = (0..self.n_rows)
            .map(|i| self.present[i * self.n_cols + col])
            .collect();
        ScoreVector { values, present }
    }

    /// Keep only the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<ScoreMatrix> {
        for &c in cols {
            if c >= self.n_cols {
                return Err(Error::IndexOutOfRange {
                    what: "column",
                    index: c,
                    len: self.n_cols,
                });
            }
        }
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        let mut present = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            for &c in cols {
                values.push(self.values[i * self.n_cols + c]);
                present.push(self.present[i * self.n_cols + c]);
            }
        }
        ScoreMatrix::from_parts(self.n_rows, cols.len(), values, present)
    }

    /// Write `customer,category,score` rows; missing entries are omitted.
    pub fn to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.n_rows {
            for b in 0..self.n_cols {
                if let Some(s) = self.get(i, b) {
                    wtr.write_record([i.to_string(), b.to_string(), format!("{s:?}")])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(std::io::BufWriter::new(file))
    }
}

/// How per-customer information is normalized into a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide by the observation count.
    Degree,
    /// Divide by the summed entropy of the observed items.
    Entropy,
}

fn check_compat(graph: &PreferenceGraph, model: &dyn PooledModel) -> Result<()> {
    if model.alphabet() != graph.alphabet() {
        return Err(Error::AlphabetMismatch {
            model: model.alphabet().symbols().join(","),
            graph: graph.alphabet().symbols().join(","),
        });
    }
    if !model.covers_items(graph.n_items()) {
        return Err(Error::ItemCoverage {
            model: model.item_limit().unwrap_or(0),
            graph: graph.n_items(),
        });
    }
    Ok(())
}

/// Average information content per observation.
pub fn pscore_degree(graph: &PreferenceGraph, model: &dyn PooledModel) -> Result<ScoreVector> {
    check_compat(graph, model)?;
    let m = graph.n_customers();
    let mut values = vec![0.0; m];
    let mut present = vec![false; m];
    for i in 0..m {
        let row = graph.row(i);
        if row.is_empty() {
            continue;
        }
        let mut num = 0.0;
        for &(j, l) in row {
            num -= model.log_prob(j as usize, l as usize);
        }
        values[i] = num / row.len() as f64;
        present[i] = true;
    }
    Ok(ScoreVector { values, present })
}

/// Information content normalized by the summed entropy of the observed
/// items. Errors when a customer's entropy denominator falls below 1e-12.
pub fn pscore_entropy(graph: &PreferenceGraph, model: &dyn PooledModel) -> Result<ScoreVector> {
    check_compat(graph, model)?;
    let m = graph.n_customers();
    let mut values = vec![0.0; m];
    let mut present = vec![false; m];
    for i in 0..m {
        let row = graph.row(i);
        if row.is_empty() {
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &(j, l) in row {
            num -= model.log_prob(j as usize, l as usize);
            den += model.item_entropy(j as usize);
        }
        if den < MIN_ENTROPY_DENOMINATOR {
            return Err(Error::DegenerateEntropy {
                customer: i,
                value: den,
            });
        }
        values[i] = num / den;
        present[i] = true;
    }
    Ok(ScoreVector { values, present })
}

/// Per-category scores: one column per category, each scored under its own
/// pooled model. A (customer, category) cell with no observations is
/// missing.
pub fn pscore_matrix(
    graph: &PreferenceGraph,
    models: &[&dyn PooledModel],
    normalization: Normalization,
) -> Result<ScoreMatrix> {
    let n_cats = graph.n_categories();
    if models.len() != n_cats {
        return Err(Error::ModelCountMismatch {
            expected: n_cats,
            got: models.len(),
        });
    }
    for model in models {
        check_compat(graph, *model)?;
    }
    let m = graph.n_customers();
    let mut values = vec![0.0; m * n_cats];
    let mut present = vec![false; m * n_cats];
    let mut num = vec![0.0; n_cats];
    let mut den = vec![0.0; n_cats];
    let mut count = vec![0usize; n_cats];
    for i in 0..m {
        num.fill(0.0);
        den.fill(0.0);
        count.fill(0);
        for &(j, l) in graph.row(i) {
            let b = graph.category_of(j as usize);
            let model = models[b];
            num[b] -= model.log_prob(j as usize, l as usize);
            den[b] += model.item_entropy(j as usize);
            count[b] += 1;
        }
        for b in 0..n_cats {
            if count[b] == 0 {
                continue;
            }
            let value = match normalization {
                Normalization::Degree => num[b] / count[b] as f64,
                Normalization::Entropy => {
                    if den[b] < MIN_ENTROPY_DENOMINATOR {
                        return Err(Error::DegenerateEntropy {
                            customer: i,
                            value: den[b],
                        });
                    }
                    num[b] / den[b]
                }
            };
            values[i * n_cats + b] = value;
            present[i * n_cats + b] = true;
        }
    }
    Ok(ScoreMatrix {
        n_rows: m,
        n_cols: n_cats,
        values,
        present,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_csv_reader, LabelAlphabet, LabelPolicy, ParseOptions, PreferenceGraph};
    use crate::pooled::{BernoulliPooled, CategoryPooled, PerItemCategoricalPooled};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn binary_graph(data: &str) -> PreferenceGraph {
        load_csv_reader(
            data.as_bytes(),
            &ParseOptions {
                labels: LabelPolicy::Binary,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn degree_score_three_observations() {
        let g = binary_graph("u1,a,+1\nu1,b,+1\nu1,c,-1\n");
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 0.6).unwrap();
        let s = pscore_degree(&g, &model).unwrap();
        let expected = -(2.0 * 0.6f64.ln() + 0.4f64.ln()) / 3.0;
        assert_relative_eq!(s.get(0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(s.get(0).unwrap(), 0.6460, max_relative = 1e-3);
    }

    #[test]
    fn degree_score_perfect_fit_limit() {
        let g = binary_graph("u1,a,+1\nu1,b,+1\nu1,c,+1\n");
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 1.0 - 1e-6).unwrap();
        let s = pscore_degree(&g, &model).unwrap().get(0).unwrap();
        assert!(s > 0.9e-6 && s < 1.1e-6, "score {s} not near 1e-6");
    }

    #[test]
    fn entropy_score_balanced_model_is_one() {
        let g = binary_graph("u1,a,+1\nu1,b,-1\n");
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 0.5).unwrap();
        let s = pscore_entropy(&g, &model).unwrap();
        assert_eq!(s.get(0).unwrap(), 1.0);
    }

    #[test]
    fn entropy_score_equals_degree_over_entropy() {
        let g = binary_graph("u1,a,+1\nu1,b,+1\nu1,c,-1\nu2,a,-1\n");
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 0.6).unwrap();
        let e = pscore_entropy(&g, &model).unwrap();
        let d = pscore_degree(&g, &model).unwrap();
        let h = model.item_entropy(0);
        for i in 0..g.n_customers() {
            assert_relative_eq!(
                e.get(i).unwrap(),
                d.get(i).unwrap() / h,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn entropy_identity_on_random_graphs() {
        // The identity pscore_entropy = pscore_degree / H(alpha_pool) is exact
        // for the scalar pooled family; check to 1e-12 on random data.
        let mut rng = crate::stream::stream(42, "projection-identity");
        for _ in 0..5 {
            let m = 40;
            let n = 25;
            let mut rows = Vec::with_capacity(m);
            for _ in 0..m {
                let mut row = Vec::new();
                for j in 0..n {
                    if rng.gen::<f64>() < 0.4 {
                        let label = u32::from(rng.gen::<f64>() < 0.3);
                        row.push((j as u32, label));
                    }
                }
                rows.push(row);
            }
            let g = PreferenceGraph::from_parts(
                LabelAlphabet::binary(),
                vec![0; n],
                rows,
                vec![],
                vec![],
                vec![],
            )
            .unwrap();
            let model = BernoulliPooled::fit(&g).unwrap();
            let e = pscore_entropy(&g, &model).unwrap();
            let d = pscore_degree(&g, &model).unwrap();
            let h = model.item_entropy(0);
            for i in 0..m {
                match (e.get(i), d.get(i)) {
                    (Some(ei), Some(di)) => {
                        assert_relative_eq!(ei, di / h, max_relative = 1e-12)
                    }
                    (None, None) => {}
                    _ => panic!("presence masks disagree at {i}"),
                }
            }
        }
    }

    #[test]
    fn zero_degree_customer_is_missing() {
        let g = PreferenceGraph::from_parts(
            LabelAlphabet::binary(),
            vec![0],
            vec![vec![(0, 0)], vec![]],
            vec![],
            vec![],
            vec![],
        )
        .unwrap();
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 0.7).unwrap();
        let s = pscore_degree(&g, &model).unwrap();
        assert!(s.is_present(0));
        assert!(!s.is_present(1));
        assert_eq!(s.get(1), None);
        assert_eq!(s.n_present(), 1);
        assert_eq!(s.present_indices(), vec![0]);
    }

    #[test]
    fn alphabet_mismatch_is_an_error() {
        let g = load_csv_reader("u1,a,x\nu1,b,y\n".as_bytes(), &ParseOptions::default()).unwrap();
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 0.5).unwrap();
        assert!(matches!(
            pscore_degree(&g, &model),
            Err(Error::AlphabetMismatch { .. })
        ));
    }

    #[test]
    fn near_deterministic_model_fails_entropy_normalization() {
        let g = binary_graph("u1,a,+1\n");
        let model = BernoulliPooled::new(LabelAlphabet::binary(), 1e-300).unwrap();
        match pscore_entropy(&g, &model) {
            Err(Error::DegenerateEntropy { customer: 0, value }) => {
                assert!(value < 1e-12);
            }
            other => panic!("expected DegenerateEntropy, got {other:?}"),
        }
    }

    #[test]
    fn matrix_single_category_matches_vector() {
        let g = binary_graph("u1,a,+1\nu1,b,-1\nu2,a,-1\n");
        let model = BernoulliPooled::fit(&g).unwrap();
        let v = pscore_entropy(&g, &model).unwrap();
        let m = pscore_matrix(&g, &[&model], Normalization::Entropy).unwrap();
        assert_eq!(m.n_cols(), 1);
        for i in 0..g.n_customers() {
            assert_eq!(m.get(i, 0), v.get(i));
        }
        assert_eq!(m.column(0), v);
    }

    #[test]
    fn matrix_masks_unobserved_categories() {
        let g = binary_graph("u1,a,+1,books\nu1,b,-1,music\nu2,a,-1,books\n");
        let pooled = CategoryPooled::fit(&g).unwrap();
        let per_cat: Vec<BernoulliPooled> =
            (0..2).map(|b| pooled.category_model(b)).collect();
        let models: Vec<&dyn crate::pooled::PooledModel> =
            per_cat.iter().map(|m| m as _).collect();
        let s = pscore_matrix(&g, &models, Normalization::Degree).unwrap();
        assert!(s.is_present(0, 0));
        assert!(s.is_present(0, 1));
        assert!(s.is_present(1, 0));
        assert!(!s.is_present(1, 1));
        assert!(!s.is_complete());
        assert_eq!(s.first_missing(), Some((1, 1)));
        assert_eq!(s.row_present_count(0), 2);
        assert_eq!(s.row_present_count(1), 1);
    }

    #[test]
    fn matrix_model_count_must_match() {
        let g = binary_graph("u1,a,+1,books\nu1,b,-1,music\n");
        let model = BernoulliPooled::fit(&g).unwrap();
        assert!(matches!(
            pscore_matrix(&g, &[&model], Normalization::Degree),
            Err(Error::ModelCountMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn categorical_alphabet_scores() {
        let g = load_csv_reader(
            "u1,a,x\nu1,b,y\nu2,a,z\nu2,b,x\n".as_bytes(),
            &ParseOptions::default(),
        )
        .unwrap();
        let model = PerItemCategoricalPooled::fit(&g).unwrap();
        let s = pscore_degree(&g, &model).unwrap();
        for i in 0..g.n_customers() {
            let v = s.get(i).unwrap();
            assert!(v.is_finite() && v >= 0.0);
        }
    }

    #[test]
    fn select_columns_projects_the_mask() {
        let g = binary_graph("u1,a,+1,books\nu1,b,-1,music\nu2,a,-1,books\n");
        let pooled = CategoryPooled::fit(&g).unwrap();
        let per_cat: Vec<BernoulliPooled> =
            (0..2).map(|b| pooled.category_model(b)).collect();
        let models: Vec<&dyn crate::pooled::PooledModel> =
            per_cat.iter().map(|m| m as _).collect();
        let s = pscore_matrix(&g, &models, Normalization::Entropy).unwrap();
        let only_music = s.select_columns(&[1]).unwrap();
        assert_eq!(only_music.n_cols(), 1);
        assert_eq!(only_music.get(0, 0), s.get(0, 1));
        assert!(!only_music.is_present(1, 0));
        assert!(s.select_columns(&[2]).is_err());
    }
}
