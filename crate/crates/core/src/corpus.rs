//! Preference-graph corpus: loading, validation, and indexed access.
//!
//! Observations are (customer, item, label) triples, optionally tagged with a
//! category. Loading assigns dense indices in first-appearance order and
//! validates that each (customer, item) pair occurs at most once and that no
//! item sits in two categories. Customers that end up with no observations
//! are kept and flagged; scoring and clustering treat them as missing.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of distinct label symbols.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelAlphabet {
    symbols: Vec<String>,
}

impl LabelAlphabet {
    /// At least two distinct symbols, order preserved.
    pub fn new<S: Into<String>>(symbols: Vec<S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.len() < 2 {
            return Err(Error::AlphabetTooSmall { got: symbols.len() });
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::DuplicateSymbol { symbol: s.clone() });
            }
        }
        Ok(Self { symbols })
    }

    /// The canonical binary alphabet `["+1", "-1"]`.
    pub fn binary() -> Self {
        Self {
            symbols: vec!["+1".to_string(), "-1".to_string()],
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// True when the symbols are exactly {+1, -1} in either order.
    pub fn is_binary(&self) -> bool {
        self.symbols.len() == 2
            && self.symbols.iter().any(|s| s == "+1")
            && self.symbols.iter().any(|s| s == "-1")
    }

    /// Index of the "+1" symbol, if this is a binary alphabet.
    pub fn like_index(&self) -> Option<usize> {
        if self.is_binary() {
            self.symbols.iter().position(|s| s == "+1")
        } else {
            None
        }
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

/// How `load_csv` resolves label symbols.
#[derive(Debug, Clone, Default)]
pub enum LabelPolicy {
    /// Build the alphabet from distinct labels in first-appearance order.
    #[default]
    Infer,
    /// Canonical binary alphabet; accepts `+1`/`1` as like and `-1` as
    /// dislike, rejects anything else.
    Binary,
    /// Labels must come from the given alphabet.
    Fixed(LabelAlphabet),
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub labels: LabelPolicy,
    /// Skip a header record before the data.
    pub has_header: bool,
}

/// Bipartite customer-item graph with one label per observed edge.
///
/// `rows[i]` holds customer i's observations as (item index, label index)
/// pairs sorted by item. Categories partition the item set; a graph without
/// category tags has a single category.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceGraph {
    alphabet: LabelAlphabet,
    customer_ids: Vec<String>,
    item_ids: Vec<String>,
    category_ids: Vec<String>,
    category_of: Vec<u32>,
    rows: Vec<Vec<(u32, u32)>>,
}

impl PreferenceGraph {
    /// Build from pre-indexed parts. `ids` may be empty, in which case
    /// synthetic ids (`c0..`, `i0..`, `cat0..`) are generated.
    pub fn from_parts(
        alphabet: LabelAlphabet,
        category_of: Vec<u32>,
        rows: Vec<Vec<(u32, u32)>>,
        customer_ids: Vec<String>,
        item_ids: Vec<String>,
        category_ids: Vec<String>,
    ) -> Result<Self> {
        let n = category_of.len();
        let n_cats = category_ids.len().max(
            category_of
                .iter()
                .map(|&b| b as usize + 1)
                .max()
                .unwrap_or(1),
        );
        let customer_ids = if customer_ids.is_empty() {
            (0..rows.len()).map(|i| format!("c{i}")).collect()
        } else {
            customer_ids
        };
        let item_ids = if item_ids.is_empty() {
            (0..n).map(|j| format!("i{j}")).collect()
        } else {
            item_ids
        };
        let category_ids = if category_ids.is_empty() {
            (0..n_cats).map(|b| format!("cat{b}")).collect()
        } else {
            category_ids
        };
        if customer_ids.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left_what: "customer_ids",
                left: customer_ids.len(),
                right_what: "rows",
                right: rows.len(),
            });
        }
        if item_ids.len() != n {
            return Err(Error::LengthMismatch {
                left_what: "item_ids",
                left: item_ids.len(),
                right_what: "category_of",
                right: n,
            });
        }
        let graph = Self {
            alphabet,
            customer_ids,
            item_ids,
            category_ids,
            category_of,
            rows,
        };
        graph.validate()?;
        Ok(graph)
    }

    fn validate(&self) -> Result<()> {
        let n = self.item_ids.len();
        let n_cats = self.category_ids.len();
        let n_labels = self.alphabet.len();
        for &b in &self.category_of {
            if b as usize >= n_cats {
                return Err(Error::IndexOutOfRange {
                    what: "category",
                    index: b as usize,
                    len: n_cats,
                });
            }
        }
        // Categories partition the items: every block non-empty.
        for b in 0..n_cats {
            if !self.category_of.iter().any(|&c| c as usize == b) {
                return Err(Error::CategoryWithoutItems { category: b });
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            for w in row.windows(2) {
                if w[0].0 >= w[1].0 {
                    if w[0].0 == w[1].0 {
                        return Err(Error::DuplicateObservation {
                            customer: self.customer_ids[i].clone(),
                            item: self.item_ids[w[0].0 as usize].clone(),
                        });
                    }
                    return Err(Error::InvalidParameter {
                        message: format!("row {i} not sorted by item index"),
                    });
                }
            }
            for &(j, l) in row {
                if j as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "item",
                        index: j as usize,
                        len: n,
                    });
                }
                if l as usize >= n_labels {
                    return Err(Error::IndexOutOfRange {
                        what: "label",
                        index: l as usize,
                        len: n_labels,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    /// Number of customers m.
    pub fn n_customers(&self) -> usize {
        self.rows.len()
    }

    /// Number of items n.
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Number of categories B.
    pub fn n_categories(&self) -> usize {
        self.category_ids.len()
    }

    /// Category index of an item.
    pub fn category_of(&self, item: usize) -> usize {
        self.category_of[item] as usize
    }

    pub fn customer_id(&self, i: usize) -> &str {
        &self.customer_ids[i]
    }

    pub fn item_id(&self, j: usize) -> &str {
        &self.item_ids[j]
    }

    pub fn category_id(&self, b: usize) -> &str {
        &self.category_ids[b]
    }

    /// Customer i's observations as (item, label) index pairs sorted by item.
    pub fn row(&self, i: usize) -> &[(u32, u32)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(u32, u32)>] {
        &self.rows
    }

    /// Number of observations of customer i.
    pub fn degree(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    /// Total number of observations.
    pub fn n_observations(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn has_observations(&self, i: usize) -> bool {
        !self.rows[i].is_empty()
    }

    /// Customers with no observations; excluded from scoring and clustering.
    pub fn zero_degree_customers(&self) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i].is_empty())
            .collect()
    }

    /// Customer i's observations restricted to one category.
    pub fn category_slice(&self, i: usize, category: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
        let cat = category as u32;
        self.rows[i]
            .iter()
            .copied()
            .filter(move |&(j, _)| self.category_of[j as usize] == cat)
    }

    /// All observations as (customer, item, label) index triples, ordered by
    /// (customer, item).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .map(move |&(j, l)| (i, j as usize, l as usize))
        })
    }

    /// Write observations as CSV ordered by (customer, item). The category
    /// column is emitted only for graphs with more than one category.
    pub fn to_csv_writer<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        let with_category = self.n_categories() > 1;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, l) in row {
                let item = j as usize;
                if with_category {
                    wtr.write_record([
                        self.customer_ids[i].as_str(),
                        self.item_ids[item].as_str(),
                        self.alphabet.symbol(l as usize),
                        self.category_ids[self.category_of[item] as usize].as_str(),
                    ])?;
                } else {
                    wtr.write_record([
                        self.customer_ids[i].as_str(),
                        self.item_ids[item].as_str(),
                        self.alphabet.symbol(l as usize),
                    ])?;
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

/// Load a `customer,item,label[,category]` CSV.
///
/// Indices are dense in first-appearance order. Rejects duplicate
/// (customer, item) pairs, labels outside the policy, empty fields, and
/// items tagged with two different categories.
pub fn load_csv<P: AsRef<Path>>(path: P, options: &ParseOptions) -> Result<PreferenceGraph> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(std::io::BufReader::new(file), options)
}

/// [`load_csv`] over any reader.
pub fn load_csv_reader<R: Read>(reader: R, options: &ParseOptions) -> Result<PreferenceGraph> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut customer_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut category_ids: Vec<String> = Vec::new();
    let mut customer_index: HashMap<String, u32> = HashMap::new();
    let mut item_index: HashMap<String, u32> = HashMap::new();
    let mut category_index: HashMap<String, u32> = HashMap::new();
    let mut category_of: Vec<u32> = Vec::new();
    let mut rows: Vec<Vec<(u32, u32)>> = Vec::new();

    let mut symbols: Vec<String> = Vec::new();
    let mut symbol_index: HashMap<String, u32> = HashMap::new();
    let fixed: Option<LabelAlphabet> = match &options.labels {
        LabelPolicy::Infer => None,
        LabelPolicy::Binary => Some(LabelAlphabet::binary()),
        LabelPolicy::Fixed(a) => Some(a.clone()),
    };

    let mut arity: Option<usize> = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let fields = record.len();
        if fields != 3 && fields != 4 {
            return Err(Error::MalformedRecord {
                line,
                message: format!("expected 3 or 4 fields, got {fields}"),
            });
        }
        match arity {
            None => arity = Some(fields),
            Some(a) if a != fields => {
                return Err(Error::MalformedRecord {
                    line,
                    message: format!("expected {a} fields as in the first record, got {fields}"),
                });
            }
            _ => {}
        }
        let customer = record.get(0).unwrap_or("");
        let item = record.get(1).unwrap_or("");
        let mut label = record.get(2).unwrap_or("").to_string();
        if customer.is_empty() {
            return Err(Error::MalformedRecord {
                line,
                message: "empty customer id".into(),
            });
        }
        if item.is_empty() {
            return Err(Error::MalformedRecord {
                line,
                message: "empty item id".into(),
            });
        }
        if label.is_empty() {
            return Err(Error::MalformedRecord {
                line,
                message: "empty label".into(),
            });
        }
        if matches!(options.labels, LabelPolicy::Binary) && label == "1" {
            label = "+1".to_string();
        }

        let label_idx = match &fixed {
            Some(alphabet) => match alphabet.index_of(&label) {
                Some(l) => l as u32,
                None => return Err(Error::UnknownLabel { line, label }),
            },
            None => match symbol_index.get(&label) {
                Some(&l) => l,
                None => {
                    let l = symbols.len() as u32;
                    symbols.push(label.clone());
                    symbol_index.insert(label, l);
                    l
                }
            },
        };

        let cust_idx = *customer_index.entry(customer.to_string()).or_insert_with(|| {
            customer_ids.push(customer.to_string());
            rows.push(Vec::new());
            (customer_ids.len() - 1) as u32
        });

        let category = if fields == 4 {
            let c = record.get(3).unwrap_or("");
            if c.is_empty() {
                return Err(Error::MalformedRecord {
                    line,
                    message: "empty category".into(),
                });
            }
            c
        } else {
            "0"
        };
        let cat_idx = *category_index.entry(category.to_string()).or_insert_with(|| {
            category_ids.push(category.to_string());
            (category_ids.len() - 1) as u32
        });

        match item_index.get(item) {
            Some(&j) => {
                if category_of[j as usize] != cat_idx {
                    return Err(Error::CategoryConflict {
                        item: item.to_string(),
                        first: category_ids[category_of[j as usize] as usize].clone(),
                        second: category.to_string(),
                    });
                }
                if rows[cust_idx as usize].iter().any(|&(jj, _)| jj == j) {
                    return Err(Error::DuplicateObservation {
                        customer: customer.to_string(),
                        item: item.to_string(),
                    });
                }
                rows[cust_idx as usize].push((j, label_idx));
            }
            None => {
                let j = item_ids.len() as u32;
                item_ids.push(item.to_string());
                item_index.insert(item.to_string(), j);
                category_of.push(cat_idx);
                rows[cust_idx as usize].push((j, label_idx));
            }
        }
    }

    if rows.is_empty() {
        return Err(Error::EmptyGraph);
    }

    let alphabet = match fixed {
        Some(a) => a,
        None => LabelAlphabet::new(symbols)?,
    };
    for row in &mut rows {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    PreferenceGraph::from_parts(alphabet, category_of, rows, customer_ids, item_ids, category_ids)
}
