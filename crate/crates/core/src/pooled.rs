//! Pooled preference models.
//!
//! A pooled model is fit once to all observations and assigns every item a
//! label distribution. Four families:
//!
//! - [`BernoulliPooled`]: one like-probability shared by every item
//! - [`PerItemBinaryPooled`]: per-item like log-odds
//! - [`PerItemCategoricalPooled`]: per-item distributions over any alphabet
//! - [`CategoryPooled`]: one like-probability per item category
//!
//! Count-based estimates use additive smoothing (default 1/2); the scalar
//! like-fractions are raw counts clamped away from 0 and 1. All logs are
//! natural.

use serde::{Deserialize, Serialize};

use crate::classify::binary_entropy_unchecked;
use crate::corpus::{LabelAlphabet, PreferenceGraph};
use crate::error::{Error, Result};

/// Smoothing and clamping knobs for the fit functions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    /// Additive count smoothing for the per-item estimators.
    pub smoothing: f64,
    /// Like-fractions are clamped to [clamp, 1 - clamp].
    pub clamp: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            smoothing: 0.5,
            clamp: 1e-6,
        }
    }
}

/// Item-level label distribution shared by the scoring code.
///
/// `log_prob` and `item_entropy` panic on out-of-range item or label
/// indices; use [`PooledModel::covers_items`] and the alphabet accessor to
/// validate up front.
pub trait PooledModel {
    fn alphabet(&self) -> &LabelAlphabet;

    /// Natural-log probability of `label` for `item`. Families without
    /// per-item parameters ignore `item`.
    fn log_prob(&self, item: usize, label: usize) -> f64;

    /// Shannon entropy (nats) of `item`'s label distribution.
    fn item_entropy(&self, item: usize) -> f64;

    /// Number of items the model parameterizes, or None when a single
    /// distribution applies to every item.
    fn item_limit(&self) -> Option<usize>;

    /// True when the model defines a distribution for every item of an
    /// `n_items`-item graph.
    fn covers_items(&self, n_items: usize) -> bool {
        self.item_limit().map_or(true, |limit| n_items <= limit)
    }
}

fn clamp_unit(x: f64, clamp: f64) -> f64 {
    x.max(clamp).min(1.0 - clamp)
}

fn require_binary(alphabet: &LabelAlphabet) -> Result<usize> {
    alphabet
        .like_index()
        .ok_or_else(|| Error::NonBinaryAlphabet { got: alphabet.symbols().join(",") })
}

fn require_observations(graph: &PreferenceGraph) -> Result<()> {
    if graph.n_observations() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(())
}

/// Numerically stable ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Single like-probability shared by all items.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliPooled {
    alphabet: LabelAlphabet,
    alpha_pool: f64,
}

impl BernoulliPooled {
    pub fn new(alphabet: LabelAlphabet, alpha_pool: f64) -> Result<Self> {
        require_binary(&alphabet)?;
        if !(alpha_pool > 0.0 && alpha_pool < 1.0) {
            return Err(Error::InvalidParameter {
                message: format!("alpha_pool must lie in (0,1), got {alpha_pool}"),
            });
        }
        Ok(Self { alphabet, alpha_pool })
    }

    /// Pooled like-fraction over all observations, clamped to
    /// [clamp, 1 - clamp].
    pub fn fit(graph: &PreferenceGraph) -> Result<Self> {
        Self::fit_with(graph, &FitOptions::default())
    }

    pub fn fit_with(graph: &PreferenceGraph, options: &FitOptions) -> Result<Self> {
        require_observations(graph)?;
        let like = require_binary(graph.alphabet())? as u32;
        let mut likes: u64 = 0;
        let mut total: u64 = 0;
        for row in graph.rows() {
            for &(_, l) in row {
                total += 1;
                if l == like {
                    likes += 1;
                }
            }
        }
        let alpha = clamp_unit(likes as f64 / total as f64, options.clamp);
        Ok(Self {
            alphabet: graph.alphabet().clone(),
            alpha_pool: alpha,
        })
    }

    pub fn alpha_pool(&self) -> f64 {
        self.alpha_pool
    }
}

impl PooledModel for BernoulliPooled {
    fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    fn log_prob(&self, _item: usize, label: usize) -> f64 {
        assert!(label < 2, "label index {label} out of range for binary model");
        if label == self.alphabet.like_index().expect("binary alphabet") {
            self.alpha_pool.ln()
        } else {
            (1.0 - self.alpha_pool).ln()
        }
    }

    fn item_entropy(&self, _item: usize) -> f64 {
        binary_entropy_unchecked(self.alpha_pool)
    }

    fn item_limit(&self) -> Option<usize> {
        None
    }
}

/// Per-item like log-odds.
#[derive(Debug, Clone, PartialEq)]
pub struct PerItemBinaryPooled {
    alphabet: LabelAlphabet,
    omega: Vec<f64>,
}

impl PerItemBinaryPooled {
    pub fn new(alphabet: LabelAlphabet, omega: Vec<f64>) -> Result<Self> {
        require_binary(&alphabet)?;
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite { what: "log-odds" });
        }
        Ok(Self { alphabet, omega })
    }

    /// Smoothed per-item log-odds ln((c+ + s)/(c- + s)). An item with no
    /// observations gets log-odds 0 (even split).
    pub fn fit(graph: &PreferenceGraph) -> Result<Self> {
        Self::fit_with(graph, &FitOptions::default())
    }

    pub fn fit_with(graph: &PreferenceGraph, options: &FitOptions) -> Result<Self> {
        require_observations(graph)?;
        let like = require_binary(graph.alphabet())? as u32;
        let n = graph.n_items();
        let mut likes = vec![0u64; n];
        let mut totals = vec![0u64; n];
        for row in graph.rows() {
            for &(j, l) in row {
                totals[j as usize] += 1;
                if l == like {
                    likes[j as usize] += 1;
                }
            }
        }
        let s = options.smoothing;
        let omega = (0..n)
            .map(|j| {
                let c_like = likes[j] as f64 + s;
                let c_dislike = (totals[j] - likes[j]) as f64 + s;
                (c_like / c_dislike).ln()
            })
            .collect();
        Ok(Self {
            alphabet: graph.alphabet().clone(),
            omega,
        })
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Like-probability implied by the log-odds of `item`.
    pub fn like_prob(&self, item: usize) -> f64 {
        1.0 / (1.0 + (-self.omega[item]).exp())
    }
}

impl PooledModel for PerItemBinaryPooled {
    fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    fn log_prob(&self, item: usize, label: usize) -> f64 {
        assert!(label < 2, "label index {label} out of range for binary model");
        let w = self.omega[item];
        if label == self.alphabet.like_index().expect("binary alphabet") {
            -softplus(-w)
        } else {
            -softplus(w)
        }
    }

    fn item_entropy(&self, item: usize) -> f64 {
        binary_entropy_unchecked(self.like_prob(item))
    }

    fn item_limit(&self) -> Option<usize> {
        Some(self.omega.len())
    }
}

/// Per-item categorical distributions over an arbitrary alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct PerItemCategoricalPooled {
    alphabet: LabelAlphabet,
    probs: Vec<Vec<f64>>,
}

impl PerItemCategoricalPooled {
    pub fn new(alphabet: LabelAlphabet, probs: Vec<Vec<f64>>) -> Result<Self> {
        let l = alphabet.len();
        for (j, p) in probs.iter().enumerate() {
            if p.len() != l {
                return Err(Error::LengthMismatch {
                    left_what: "distribution",
                    left: p.len(),
                    right_what: "alphabet",
                    right: l,
                });
            }
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter {
                    message: format!("item {j}: probabilities must be non-negative and sum to 1"),
                });
            }
        }
        Ok(Self { alphabet, probs })
    }

    /// Smoothed per-item frequencies (c + s)/(total + s*L). An item with no
    /// observations gets the uniform distribution.
    pub fn fit(graph: &PreferenceGraph) -> Result<Self> {
        Self::fit_with(graph, &FitOptions::default())
    }

    pub fn fit_with(graph: &PreferenceGraph, options: &FitOptions) -> Result<Self> {
        require_observations(graph)?;
        let n = graph.n_items();
        let l = graph.alphabet().len();
        let mut counts = vec![0u64; n * l];
        let mut totals = vec![0u64; n];
        for row in graph.rows() {
            for &(j, lab) in row {
                counts[j as usize * l + lab as usize] += 1;
                totals[j as usize] += 1;
            }
        }
        let s = options.smoothing;
        let probs = (0..n)
            .map(|j| {
                let denom = totals[j] as f64 + s * l as f64;
                (0..l)
                    .map(|lab| (counts[j * l + lab] as f64 + s) / denom)
                    .collect()
            })
            .collect();
        Ok(Self {
            alphabet: graph.alphabet().clone(),
            probs,
        })
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

impl PooledModel for PerItemCategoricalPooled {
    fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    fn log_prob(&self, item: usize, label: usize) -> f64 {
        let p = self.probs[item][label];
        if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            p.ln()
        }
    }

    fn item_entropy(&self, item: usize) -> f64 {
        self.probs[item]
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    fn item_limit(&self) -> Option<usize> {
        Some(self.probs.len())
    }
}

/// One like-probability per item category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryPooled {
    alphabet: LabelAlphabet,
    alpha: Vec<f64>,
    category_of: Vec<u32>,
}

impl CategoryPooled {
    /// Per-category like-fractions, clamped like the scalar fit. A category
    /// with no observations is an error.
    pub fn fit(graph: &PreferenceGraph) -> Result<Self> {
        Self::fit_with(graph, &FitOptions::default())
    }

    pub fn fit_with(graph: &PreferenceGraph, options: &FitOptions) -> Result<Self> {
        require_observations(graph)?;
        let like = require_binary(graph.alphabet())? as u32;
        let n_cats = graph.n_categories();
        let mut likes = vec![0u64; n_cats];
        let mut totals = vec![0u64; n_cats];
        for row in graph.rows() {
            for &(j, l) in row {
                let b = graph.category_of(j as usize);
                totals[b] += 1;
                if l == like {
                    likes[b] += 1;
                }
            }
        }
        let alpha = (0..n_cats)
            .map(|b| {
                if totals[b] == 0 {
                    Err(Error::EmptyCategory { category: b })
                } else {
                    Ok(clamp_unit(likes[b] as f64 / totals[b] as f64, options.clamp))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let category_of = (0..graph.n_items())
            .map(|j| graph.category_of(j) as u32)
            .collect();
        Ok(Self {
            alphabet: graph.alphabet().clone(),
            alpha,
            category_of,
        })
    }

    pub fn n_categories(&self) -> usize {
        self.alpha.len()
    }

    /// Like-probability of category `b`.
    pub fn alpha(&self, b: usize) -> f64 {
        self.alpha[b]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    /// Scalar view of one category, for per-category scoring.
    pub fn category_model(&self, b: usize) -> BernoulliPooled {
        BernoulliPooled {
            alphabet: self.alphabet.clone(),
            alpha_pool: self.alpha[b],
        }
    }
}

impl PooledModel for CategoryPooled {
    fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    fn log_prob(&self, item: usize, label: usize) -> f64 {
        assert!(label < 2, "label index {label} out of range for binary model");
        let a = self.alpha[self.category_of[item] as usize];
        if label == self.alphabet.like_index().expect("binary alphabet") {
            a.ln()
        } else {
            (1.0 - a).ln()
        }
    }

    fn item_entropy(&self, item: usize) -> f64 {
        binary_entropy_unchecked(self.alpha[self.category_of[item] as usize])
    }

    fn item_limit(&self) -> Option<usize> {
        Some(self.category_of.len())
    }
}

/// Any pooled model, for serialization and dynamic dispatch.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPooled {
    Bernoulli(BernoulliPooled),
    PerItemBinary(PerItemBinaryPooled),
    PerItemCategorical(PerItemCategoricalPooled),
    Category(CategoryPooled),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    family: String,
    alphabet: LabelAlphabet,
    parameters: serde_json::Value,
}

impl AnyPooled {
    pub fn as_model(&self) -> &dyn PooledModel {
        match self {
            AnyPooled::Bernoulli(m) => m,
            AnyPooled::PerItemBinary(m) => m,
            AnyPooled::PerItemCategorical(m) => m,
            AnyPooled::Category(m) => m,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            AnyPooled::Bernoulli(_) => "bernoulli",
            AnyPooled::PerItemBinary(_) => "per-item-binary",
            AnyPooled::PerItemCategorical(_) => "per-item-categorical",
            AnyPooled::Category(_) => "category-bernoulli",
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        let (alphabet, parameters) = match self {
            AnyPooled::Bernoulli(m) => (
                m.alphabet.clone(),
                serde_json::json!({ "alpha_pool": m.alpha_pool }),
            ),
            AnyPooled::PerItemBinary(m) => {
                (m.alphabet.clone(), serde_json::json!({ "omega": m.omega }))
            }
            AnyPooled::PerItemCategorical(m) => {
                (m.alphabet.clone(), serde_json::json!({ "probs": m.probs }))
            }
            AnyPooled::Category(m) => (
                m.alphabet.clone(),
                serde_json::json!({ "alpha": m.alpha, "category_of": m.category_of }),
            ),
        };
        let file = ModelFile {
            family: self.family().to_string(),
            alphabet,
            parameters,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parse and validate a serialized model.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let p = file.parameters;
        match file.family.as_str() {
            "bernoulli" => {
                let alpha: f64 = serde_json::from_value(
                    p.get("alpha_pool").cloned().unwrap_or_default(),
                )?;
                Ok(AnyPooled::Bernoulli(BernoulliPooled::new(file.alphabet, alpha)?))
            }
            "per-item-binary" => {
                let omega: Vec<f64> =
                    serde_json::from_value(p.get("omega").cloned().unwrap_or_default())?;
                Ok(AnyPooled::PerItemBinary(PerItemBinaryPooled::new(
                    file.alphabet,
                    omega,
                )?))
            }
            "per-item-categorical" => {
                let probs: Vec<Vec<f64>> =
                    serde_json::from_value(p.get("probs").cloned().unwrap_or_default())?;
                Ok(AnyPooled::PerItemCategorical(PerItemCategoricalPooled::new(
                    file.alphabet,
                    probs,
                )?))
            }
            "category-bernoulli" => {
                let alpha: Vec<f64> =
                    serde_json::from_value(p.get("alpha").cloned().unwrap_or_default())?;
                let category_of: Vec<u32> =
                    serde_json::from_value(p.get("category_of").cloned().unwrap_or_default())?;
                if alpha.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
                    return Err(Error::InvalidParameter {
                        message: "category like-probabilities must lie in (0,1)".into(),
                    });
                }
                let n_cats = alpha.len();
                if category_of.iter().any(|&b| b as usize >= n_cats) {
                    return Err(Error::IndexOutOfRange {
                        what: "category",
                        index: category_of.iter().map(|&b| b as usize).max().unwrap_or(0),
                        len: n_cats,
                    });
                }
                require_binary(&file.alphabet)?;
                Ok(AnyPooled::Category(CategoryPooled {
                    alphabet: file.alphabet,
                    alpha,
                    category_of,
                }))
            }
            other => Err(Error::InvalidParameter {
                message: format!("unknown model family {other:?}"),
            }),
        }
    }
}
