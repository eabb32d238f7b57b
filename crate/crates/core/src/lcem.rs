//! Latent-class benchmark: MAP EM for the Bernoulli mixture.
//!
//! Each segment k has a mixing proportion q_k and a single like-probability
//! alpha_k shared by all items. Fitting maximizes the posterior under a
//! Beta(a, b) prior on each alpha_k and a symmetric Dirichlet(c) prior on
//! q, with the best of several random restarts kept.
//!
//! Because items are interchangeable within a segment, each customer
//! enters the algorithm only through (likes, degree), which keeps the
//! E-step at O(mK) regardless of graph density.

use serde::{Deserialize, Serialize};

use crate::corpus::PreferenceGraph;
use crate::error::{Error, Result};

/// EM search settings. Priors of (1, 1, 1) recover plain maximum
/// likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative log-posterior change that counts as converged.
    pub tol: f64,
    pub seed: u64,
    /// Beta prior on each like-probability.
    pub prior_a: f64,
    pub prior_b: f64,
    /// Symmetric Dirichlet prior on the proportions.
    pub prior_dirichlet: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 500,
            tol: 1e-8,
            seed: 0,
            prior_a: 2.0,
            prior_b: 2.0,
            prior_dirichlet: 1.5,
        }
    }
}

const ALPHA_CLAMP: f64 = 1e-6;

/// A fitted latent-class mixture.
///
/// The JSON serialization carries {k, q, alpha, log_posterior_trace,
/// restart_index}; responsibilities stay in memory only.
#[derive(Debug, Clone, Serialize)]
pub struct LatentClassModel {
    k: usize,
    q: Vec<f64>,
    alpha: Vec<f64>,
    log_posterior_trace: Vec<f64>,
    restart_index: usize,
    #[serde(skip)]
    responsibilities: Vec<f64>,
    #[serde(skip)]
    iterations_run: usize,
}

impl LatentClassModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Log posterior after initialization and after each iteration, up to
    /// additive normalizing constants; non-decreasing.
    pub fn log_posterior_trace(&self) -> &[f64] {
        &self.log_posterior_trace
    }

    pub fn final_log_posterior(&self) -> f64 {
        *self.log_posterior_trace.last().unwrap()
    }

    pub fn restart_index(&self) -> usize {
        self.restart_index
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn n_customers(&self) -> usize {
        self.responsibilities.len() / self.k
    }

    /// Posterior membership probabilities of one customer at the fitted
    /// parameters; sums to 1.
    pub fn responsibilities(&self, customer: usize) -> &[f64] {
        &self.responsibilities[customer * self.k..(customer + 1) * self.k]
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

// Per-customer sufficient statistics: like count and degree.
pub(crate) struct Counts {
    plus: Vec<f64>,
    degree: Vec<f64>,
}

impl Counts {
    fn m(&self) -> usize {
        self.plus.len()
    }
}

fn gather_counts(graph: &PreferenceGraph) -> Result<Counts> {
    if !graph.alphabet().is_binary() {
        return Err(Error::NonBinaryAlphabet {
            got: graph.alphabet().symbols().join(","),
        });
    }
    if graph.n_observations() == 0 {
        return Err(Error::EmptyGraph);
    }
    let like = graph.alphabet().like_index().expect("binary alphabet checked above");
    let m = graph.n_customers();
    let mut plus = vec![0.0; m];
    let mut degree = vec![0.0; m];
    for i in 0..m {
        for &(_, l) in graph.row(i) {
            degree[i] += 1.0;
            if l as usize == like {
                plus[i] += 1.0;
            }
        }
    }
    Ok(Counts { plus, degree })
}

fn check_config(config: &EmConfig) -> Result<()> {
    if config.restarts == 0 || config.max_iters == 0 {
        return Err(Error::InvalidParameter {
            message: "need at least one restart and one iteration".into(),
        });
    }
    if !(config.tol >= 0.0) {
        return Err(Error::InvalidParameter {
            message: "tol must be nonnegative".into(),
        });
    }
    for (name, v) in [
        ("prior_a", config.prior_a),
        ("prior_b", config.prior_b),
        ("prior_dirichlet", config.prior_dirichlet),
    ] {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                message: format!("{name} must be at least 1, got {v}"),
            });
        }
    }
    Ok(())
}

pub(crate) struct EmRun {
    q: Vec<f64>,
    alpha: Vec<f64>,
    trace: Vec<f64>,
    gamma: Vec<f64>,
    iters: usize,
}

// E-step into `gamma` (row-major m x k), log-space with row-max
// subtraction. Returns the data log-likelihood term of the posterior.
fn e_step(counts: &Counts, q: &[f64], alpha: &[f64], gamma: &mut [f64]) -> f64 {
    let k = q.len();
    let lq: Vec<f64> = q.iter().map(|&x| x.ln()).collect();
    let la: Vec<f64> = alpha.iter().map(|&x| x.ln()).collect();
    let l1a: Vec<f64> = alpha.iter().map(|&x| (1.0 - x).ln()).collect();
    let mut loglik = 0.0;
    for i in 0..counts.m() {
        let row = &mut gamma[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for kk in 0..k {
            let w = lq[kk] + counts.plus[i] * la[kk] + (counts.degree[i] - counts.plus[i]) * l1a[kk];
            row[kk] = w;
            if w > max {
                max = w;
            }
        }
        let mut total = 0.0;
        for w in row.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        for w in row.iter_mut() {
            *w /= total;
        }
        loglik += max + total.ln();
    }
    loglik
}

// MAP M-step from responsibilities.
pub(crate) fn m_step(
    counts: &Counts,
    gamma: &[f64],
    k: usize,
    config: &EmConfig,
) -> (Vec<f64>, Vec<f64>) {
    let m = counts.m();
    let c = config.prior_dirichlet;
    let (a, b) = (config.prior_a, config.prior_b);
    let mut q = vec![0.0; k];
    let mut like = vec![0.0; k];
    let mut total = vec![0.0; k];
    for i in 0..m {
        let row = &gamma[i * k..(i + 1) * k];
        for kk in 0..k {
            q[kk] += row[kk];
            like[kk] += row[kk] * counts.plus[i];
            total[kk] += row[kk] * counts.degree[i];
        }
    }
    let denom = m as f64 + k as f64 * (c - 1.0);
    for kk in 0..k {
        q[kk] = (q[kk] + c - 1.0) / denom;
        like[kk] = ((like[kk] + a - 1.0) / (total[kk] + a + b - 2.0))
            .clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP);
    }
    (q, like)
}

// Log prior up to normalizing constants.
fn log_prior(q: &[f64], alpha: &[f64], config: &EmConfig) -> f64 {
    let mut lp = 0.0;
    for (&qk, &ak) in q.iter().zip(alpha) {
        lp += (config.prior_dirichlet - 1.0) * qk.ln();
        lp += (config.prior_a - 1.0) * ak.ln() + (config.prior_b - 1.0) * (1.0 - ak).ln();
    }
    lp
}

pub(crate) fn run_em(
    counts: &Counts,
    k: usize,
    config: &EmConfig,
    init_alpha: &[f64],
    init_q: &[f64],
) -> EmRun {
    let m = counts.m();
    let mut q = init_q.to_vec();
    let mut alpha = init_alpha.to_vec();
    let mut gamma = vec![0.0; m * k];

    let posterior_at = |q: &[f64], alpha: &[f64], gamma: &mut [f64]| -> f64 {
        e_step(counts, q, alpha, gamma) + log_prior(q, alpha, config)
    };

    let mut trace = vec![posterior_at(&q, &alpha, &mut gamma)];
    let mut iters = 0;
    for _ in 0..config.max_iters {
        // gamma currently holds the E-step at (q, alpha).
        let (new_q, new_alpha) = m_step(counts, &gamma, k, config);
        q = new_q;
        alpha = new_alpha;
        iters += 1;
        let lp = posterior_at(&q, &alpha, &mut gamma);
        let prev = *trace.last().unwrap();
        trace.push(lp);
        if ((lp - prev) / prev.abs().max(1e-300)).abs() < config.tol {
            break;
        }
    }
    // gamma is already the E-step at the final parameters.
    EmRun {
        q,
        alpha,
        trace,
        gamma,
        iters,
    }
}

fn draw_init(k: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let alpha: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..0.95)).collect();
    // Uniform simplex draw via normalized exponentials.
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let q = raw.iter().map(|&e| e / total).collect();
    (alpha, q)
}

/// Fit a K-class mixture by MAP EM, keeping the best of
/// `config.restarts` random initializations (ties go to the earliest).
pub fn em_fit(graph: &PreferenceGraph, k: usize, config: &EmConfig) -> Result<LatentClassModel> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            message: "k must be at least 1".into(),
        });
    }
    check_config(config)?;
    let counts = gather_counts(graph)?;

    let mut best: Option<(EmRun, usize)> = None;
    for restart in 0..config.restarts {
        let mut rng = crate::stream::stream_indexed(config.seed, "em-restart", restart as u64);
        let (init_alpha, init_q) = draw_init(k, &mut rng);
        let run = run_em(&counts, k, config, &init_alpha, &init_q);
        let better = match &best {
            None => true,
            Some((b, _)) => *run.trace.last().unwrap() > *b.trace.last().unwrap(),
        };
        if better {
            best = Some((run, restart));
        }
    }
    let (run, restart_index) = best.unwrap();
    Ok(LatentClassModel {
        k,
        q: run.q,
        alpha: run.alpha,
        log_posterior_trace: run.trace,
        restart_index,
        responsibilities: run.gamma,
        iterations_run: run.iters,
    })
}

/// Hard assignment: most probable segment per customer, ties toward the
/// lowest index.
pub fn em_assign(model: &LatentClassModel) -> Vec<usize> {
    let m = model.n_customers();
    (0..m)
        .map(|i| {
            let row = model.responsibilities(i);
            let mut best = 0;
            let mut best_g = f64::NEG_INFINITY;
            for (kk, &g) in row.iter().enumerate() {
                if g > best_g {
                    best = kk;
                    best_g = g;
                }
            }
            best
        })
        .collect()
}

/// Posterior-mean like probability for one customer.
pub fn mixture_prediction(model: &LatentClassModel, customer: usize) -> f64 {
    model
        .responsibilities(customer)
        .iter()
        .zip(model.alpha())
        .map(|(&g, &a)| g * a)
        .sum()
}
