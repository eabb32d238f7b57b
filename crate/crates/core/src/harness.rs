//! Experiment harness: the segmentation pipeline behind the CLI, the
//! benchmark grid, concentration runs, and holdout prediction.
//!
//! Every run is driven by an [`ExperimentConfig`] plus a master seed.
//! Sub-seeds for data generation, clustering restarts, and EM restarts are
//! derived from the master seed per stage and replication, so a report is a
//! pure function of (config, seed): serializing it with
//! [`Report::with_zeroed_timings`] gives bytes that reproduce exactly.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::classify::{
    nn_classify_scalar, nn_classify_vector, separation_constants, CenterSet, ClassifyOptions,
    SeparationConstants,
};
use crate::cluster::{
    accuracy, align_labels, estimate_density, kmeans, AlignMode, DensityConfig, DensityEstimate,
    KmeansConfig, Segmentation,
};
use crate::corpus::PreferenceGraph;
use crate::error::{Error, Result};
use crate::factorize::{als_factorize, spectral_project, AlsConfig};
use crate::lcem::{em_assign, em_fit, mixture_prediction, EmConfig};
use crate::pooled::{BernoulliPooled, CategoryPooled, PerItemCategoricalPooled, PooledModel};
use crate::projection::{pscore_degree, pscore_entropy, pscore_matrix, Normalization, ScoreVector};
use crate::stream::{derive_seed, derive_seed_indexed, stream_indexed};
use crate::synthgen::{
    gen_lc_ind, gen_lc_ind_cat, gen_lc_ind_regular, sample_table1_model, SynthSpecCat,
    SynthSpecInd,
};

/// Report envelope identifier; bump when the report layout changes.
pub const REPORT_SCHEMA_ID: &str = "segproj-report/1";

/// Relative deviation thresholds evaluated by the concentration runs.
pub const CONCENTRATION_EPSILONS: [f64; 3] = [0.02, 0.05, 0.1];

/// Default segment counts for the benchmark grid.
pub const TABLE1_KS: [usize; 3] = [5, 7, 9];

/// Default sparsity levels for the benchmark grid.
pub const TABLE1_SPARSITIES: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Segmentation method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Pooled-model projection scores plus k-means.
    Proj,
    /// Latent-class mixture fitted with EM.
    Lc,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Proj => "proj",
            Method::Lc => "lc",
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Proj, Method::Lc]
}

fn default_replications() -> usize {
    1
}

/// Everything a run needs besides the data itself.
///
/// The top-level `seed` is the only seed that matters: the seeds inside
/// `kmeans`, `em`, and `als` are overwritten with values derived from it
/// before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Experiment name echoed into the report; ops fill in their own
    /// default when empty.
    pub experiment: String,
    /// Input path, carried for CLI plumbing; unused by the library ops.
    pub input: Option<String>,
    /// Output path, carried for CLI plumbing; unused by the library ops.
    pub output: Option<String>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub replications: usize,
    /// Segment count; `None` asks for density-based estimation, which only
    /// the single-category score route supports.
    pub k: Option<usize>,
    /// Score normalization; `None` picks the route default (entropy for
    /// binary labels, degree otherwise).
    pub normalization: Option<Normalization>,
    /// Factorization rank for incomplete score matrices, or the projection
    /// rank when `spectral` is set.
    pub rank: Option<usize>,
    /// Project complete score matrices onto `rank` singular directions
    /// before clustering.
    pub spectral: bool,
    /// Whether CSV inputs carry a header row; CLI plumbing.
    pub has_header: bool,
    pub kmeans: KmeansConfig,
    pub em: EmConfig,
    pub als: AlsConfig,
    pub density: DensityConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            input: None,
            output: None,
            methods: default_methods(),
            seed: 0,
            replications: default_replications(),
            k: None,
            normalization: None,
            rank: None,
            spectral: false,
            has_header: false,
            kmeans: KmeansConfig::default(),
            em: EmConfig::default(),
            als: AlsConfig::default(),
            density: DensityConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter {
                message: "replications must be at least 1".into(),
            });
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter {
                message: "at least one method is required".into(),
            });
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::InvalidParameter {
                    message: format!("method {:?} listed twice", m.name()),
                });
            }
        }
        if self.k == Some(0) {
            return Err(Error::InvalidParameter {
                message: "k must be at least 1; omit it to estimate".into(),
            });
        }
        if self.rank == Some(0) {
            return Err(Error::InvalidParameter {
                message: "rank must be at least 1".into(),
            });
        }
        Ok(())
    }

    fn name_or(&self, fallback: &str) -> String {
        if self.experiment.is_empty() {
            fallback.to_string()
        } else {
            self.experiment.clone()
        }
    }

    fn echo(&self) -> Result<Map<String, Value>> {
        match serde_json::to_value(self)? {
            Value::Object(map) => Ok(map),
            _ => unreachable!("config serializes to an object"),
        }
    }
}

/// One aggregated line of an experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sparsity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ell: Option<usize>,
    /// Percent of customers assigned their true segment, averaged over
    /// replications.
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub seconds_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub misclassification: Option<f64>,
    /// Number of replications behind the row.
    pub seeds: usize,
}

/// Experiment report: a stable JSON envelope validated against the schema
/// in `schema/report.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Map::is_empty", default)]
    pub config: Map<String, Value>,
    #[serde(skip_serializing_if = "Map::is_empty", default)]
    pub details: Map<String, Value>,
}

impl Report {
    pub fn new(experiment: String, seed: u64) -> Report {
        Report {
            schema: REPORT_SCHEMA_ID.to_string(),
            experiment,
            seed,
            rows: Vec::new(),
            notes: Vec::new(),
            config: Map::new(),
            details: Map::new(),
        }
    }

    /// Check the report against the published schema.
    pub fn validate(&self) -> Result<()> {
        validate_report_json(&serde_json::to_value(self)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut text = self.to_json_string()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Copy with every timing zeroed: `seconds_mean` in each row, and any
    /// number stored under a details key mentioning "second". Two runs of
    /// the same config and seed serialize to identical bytes after this.
    pub fn with_zeroed_timings(&self) -> Report {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.seconds_mean = 0.0;
        }
        for value in out.details.values_mut() {
            zero_timing_numbers(value, false);
        }
        out
    }
}

fn zero_timing_numbers(value: &mut Value, timing: bool) {
    match value {
        Value::Number(_) if timing => *value = json!(0.0),
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                zero_timing_numbers(v, timing || key.contains("second"));
            }
        }
        Value::Array(items) => {
            for v in items.iter_mut() {
                zero_timing_numbers(v, timing);
            }
        }
        _ => {}
    }
}

/// The published report schema, embedded verbatim.
pub fn report_schema() -> &'static str {
    include_str!("../../../schema/report.schema.json")
}

fn schema_value() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| serde_json::from_str(report_schema()).expect("embedded schema parses"))
}

/// Validate a JSON value against the published report schema.
pub fn validate_report_json(instance: &Value) -> Result<()> {
    let mut errors = Vec::new();
    check_schema(instance, schema_value(), "$", &mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            message: format!("report does not match schema: {}", errors.join("; ")),
        })
    }
}

// Covers the keywords the report schema uses: type, enum, required,
// properties, additionalProperties (boolean form), items, minimum,
// maximum, exclusiveMinimum.
fn check_schema(instance: &Value, schema: &Value, path: &str, errors: &mut Vec<String>) {
    let rules = match schema.as_object() {
        Some(o) => o,
        None => return,
    };
    if let Some(expected) = rules.get("type") {
        let names: Vec<&str> = match expected {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => Vec::new(),
        };
        if !names.iter().any(|t| type_matches(instance, t)) {
            errors.push(format!(
                "{path}: expected {}, got {}",
                names.join(" or "),
                json_type_name(instance)
            ));
            return;
        }
    }
    if let Some(allowed) = rules.get("enum").and_then(Value::as_array) {
        if !allowed.contains(instance) {
            errors.push(format!("{path}: {instance} is not one of the allowed values"));
        }
    }
    if let Some(n) = instance.as_f64() {
        if let Some(min) = rules.get("minimum").and_then(Value::as_f64) {
            if n < min {
                errors.push(format!("{path}: {n} is below the minimum {min}"));
            }
        }
        if let Some(max) = rules.get("maximum").and_then(Value::as_f64) {
            if n > max {
                errors.push(format!("{path}: {n} is above the maximum {max}"));
            }
        }
        if let Some(min) = rules.get("exclusiveMinimum").and_then(Value::as_f64) {
            if n <= min {
                errors.push(format!("{path}: {n} is not above {min}"));
            }
        }
    }
    if let Some(map) = instance.as_object() {
        if let Some(required) = rules.get("required").and_then(Value::as_array) {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    errors.push(format!("{path}: missing required field {key:?}"));
                }
            }
        }
        let properties = rules.get("properties").and_then(Value::as_object);
        let extra_allowed = rules
            .get("additionalProperties")
            .and_then(Value::as_bool)
            .unwrap_or(true);
        for (key, value) in map {
            match properties.and_then(|p| p.get(key)) {
                Some(sub) => check_schema(value, sub, &format!("{path}.{key}"), errors),
                None if !extra_allowed => {
                    errors.push(format!("{path}: unexpected field {key:?}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(sub)) = (instance.as_array(), rules.get("items")) {
        for (i, value) in items.iter().enumerate() {
            check_schema(value, sub, &format!("{path}[{i}]"), errors);
        }
    }
}

fn type_matches(value: &Value, name: &str) -> bool {
    match name {
        "object" => value.is_object(),
        "array" => value.is_array(),
        "string" => value.is_string(),
        "boolean" => value.is_boolean(),
        "null" => value.is_null(),
        "number" => value.is_number(),
        "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
        _ => false,
    }
}

fn json_type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Recursively overlay `patch` onto `base`: objects merge key by key, any
/// other value replaces what was there. Used for config files overriding
/// CLI flags.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (key, value) in p {
                match b.get_mut(key) {
                    Some(slot) => merge_json(slot, value),
                    None => {
                        b.insert(key.clone(), value.clone());
                    }
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}

/// Which score representation the pipeline clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// One score per customer.
    Scalar,
    /// Per-category score rows, no missing entries.
    CompleteMatrix,
    /// Rank-reduced rows of a complete matrix.
    SpectralMatrix,
    /// Customer factors of a masked low-rank fit.
    FactorizedMatrix,
}

impl Route {
    pub fn name(&self) -> &'static str {
        match self {
            Route::Scalar => "scalar",
            Route::CompleteMatrix => "complete-matrix",
            Route::SpectralMatrix => "spectral-matrix",
            Route::FactorizedMatrix => "factorized-matrix",
        }
    }
}

/// Result of running the segmentation pipeline on one graph.
#[derive(Debug, Clone)]
pub struct SegmentOutcome {
    pub segmentation: Segmentation,
    pub route: Route,
    /// Segment count actually used.
    pub k: usize,
    /// Set when k came out of the density estimate.
    pub k_estimated: Option<usize>,
    pub normalization: Normalization,
    /// Pooled like-fraction, when the graph is single-category binary.
    pub alpha_pool: Option<f64>,
    /// Score density, when the scores were one-dimensional.
    pub density: Option<DensityEstimate>,
    /// Whether labels were put in score order.
    pub aligned: bool,
    /// Customers left without a label (no observations, or dropped by the
    /// factorization).
    pub excluded: Vec<usize>,
    /// Wall-clock seconds from model fit through label alignment.
    pub seconds: f64,
}

fn elapsed_secs(start: Instant) -> f64 {
    // Floor at a nanosecond so reported timings stay strictly positive.
    start.elapsed().as_secs_f64().max(1e-9)
}

/// Run the full segmentation pipeline: fit the pooled model, score every
/// customer, cluster the scores, align labels where score order is
/// meaningful.
///
/// Single-category graphs go through the scalar route and support
/// density-based segment-count estimation (`k: None`). Multi-category
/// graphs are scored per category and clustered as rows, complete matrices
/// directly (optionally projected onto `rank` singular directions),
/// incomplete ones through the masked factorization; both need an explicit
/// `k`.
pub fn segment_graph(graph: &PreferenceGraph, config: &ExperimentConfig) -> Result<SegmentOutcome> {
    config.validate()?;
    let start = Instant::now();
    if graph.n_categories() == 1 {
        segment_scalar(graph, config, start)
    } else {
        segment_matrix(graph, config, start)
    }
}

fn segment_scalar(
    graph: &PreferenceGraph,
    config: &ExperimentConfig,
    start: Instant,
) -> Result<SegmentOutcome> {
    let binary = graph.alphabet().is_binary();
    let normalization = config.normalization.unwrap_or(if binary {
        Normalization::Entropy
    } else {
        Normalization::Degree
    });
    let (scores, alpha_pool): (ScoreVector, Option<f64>) = if binary {
        let pooled = BernoulliPooled::fit(graph)?;
        let scores = score_scalar(graph, &pooled, normalization)?;
        (scores, Some(pooled.alpha_pool()))
    } else {
        let pooled = PerItemCategoricalPooled::fit(graph)?;
        (score_scalar(graph, &pooled, normalization)?, None)
    };
    let values = scores.present_values();
    let indices = scores.present_indices();
    let (k, k_estimated, density) = match config.k {
        Some(k) => (k, None, estimate_density(&values, &config.density).ok()),
        None => {
            let density = estimate_density(&values, &config.density)?;
            let k = density.n_peaks();
            if k == 0 {
                return Err(Error::InvalidParameter {
                    message: "score density has no peaks; pass an explicit k".into(),
                });
            }
            (k, Some(k), Some(density))
        }
    };
    let points: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let km = KmeansConfig {
        seed: derive_seed(config.seed, "kmeans"),
        ..config.kmeans.clone()
    };
    let seg = kmeans(&points, k, &km)?.with_customer_map(&indices, graph.n_customers())?;
    let (seg, aligned) = match alpha_pool {
        Some(pool) => match align_labels(&seg, AlignMode::ByScore { alpha_pool: pool }) {
            Ok(s) => (s, true),
            // Score order is undefined at a balanced pool; keep raw labels.
            Err(Error::DegenerateDirection) => (seg, false),
            Err(e) => return Err(e),
        },
        None => (seg, false),
    };
    let seconds = elapsed_secs(start);
    let excluded = unlabeled(&seg);
    Ok(SegmentOutcome {
        segmentation: seg,
        route: Route::Scalar,
        k,
        k_estimated,
        normalization,
        alpha_pool,
        density,
        aligned,
        excluded,
        seconds,
    })
}

fn score_scalar(
    graph: &PreferenceGraph,
    model: &dyn PooledModel,
    normalization: Normalization,
) -> Result<ScoreVector> {
    match normalization {
        Normalization::Degree => pscore_degree(graph, model),
        Normalization::Entropy => pscore_entropy(graph, model),
    }
}

fn segment_matrix(
    graph: &PreferenceGraph,
    config: &ExperimentConfig,
    start: Instant,
) -> Result<SegmentOutcome> {
    let b = graph.n_categories();
    let binary = graph.alphabet().is_binary();
    let normalization = config.normalization.unwrap_or(if binary {
        Normalization::Entropy
    } else {
        Normalization::Degree
    });
    let matrix = if binary {
        let pooled = CategoryPooled::fit(graph)?;
        let models: Vec<BernoulliPooled> = (0..b).map(|c| pooled.category_model(c)).collect();
        let refs: Vec<&dyn PooledModel> = models.iter().map(|m| m as &dyn PooledModel).collect();
        pscore_matrix(graph, &refs, normalization)?
    } else {
        let pooled = PerItemCategoricalPooled::fit(graph)?;
        let refs: Vec<&dyn PooledModel> = vec![&pooled as &dyn PooledModel; b];
        pscore_matrix(graph, &refs, normalization)?
    };
    let k = config.k.ok_or_else(|| Error::InvalidParameter {
        message: "segment-count estimation needs one-dimensional scores; pass k for \
                  multi-category graphs"
            .into(),
    })?;
    let m = graph.n_customers();
    let (points, indices, route) = if matrix.first_missing().is_none() {
        if config.spectral {
            let rank = config.rank.ok_or_else(|| Error::InvalidParameter {
                message: "spectral projection needs an explicit rank".into(),
            })?;
            let projected = spectral_project(&matrix, rank)?;
            let points: Vec<Vec<f64>> = (0..m)
                .map(|i| projected.row(i).iter().cloned().collect())
                .collect();
            (points, (0..m).collect(), Route::SpectralMatrix)
        } else {
            let points: Vec<Vec<f64>> = (0..m)
                .map(|i| (0..b).map(|c| matrix.get(i, c).unwrap()).collect())
                .collect();
            (points, (0..m).collect(), Route::CompleteMatrix)
        }
    } else {
        let rank = config.rank.unwrap_or_else(|| k.min(b));
        let als = AlsConfig {
            seed: derive_seed(config.seed, "als"),
            ..config.als.clone()
        };
        let factors = als_factorize(&matrix, rank, &als)?;
        let rows = factors.u_rows();
        let keep: Vec<usize> = (0..m)
            .filter(|i| factors.empty_rows().binary_search(i).is_err())
            .collect();
        let points: Vec<Vec<f64>> = keep.iter().map(|&i| rows[i].clone()).collect();
        (points, keep, Route::FactorizedMatrix)
    };
    let km = KmeansConfig {
        seed: derive_seed(config.seed, "kmeans"),
        ..config.kmeans.clone()
    };
    let seg = kmeans(&points, k, &km)?.with_customer_map(&indices, m)?;
    let seconds = elapsed_secs(start);
    let excluded = unlabeled(&seg);
    Ok(SegmentOutcome {
        segmentation: seg,
        route,
        k,
        k_estimated: None,
        normalization,
        alpha_pool: None,
        density: None,
        aligned: false,
        excluded,
        seconds,
    })
}

fn unlabeled(seg: &Segmentation) -> Vec<usize> {
    seg.labels()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.is_none().then_some(i))
        .collect()
}

/// Segment one graph and wrap the outcome in a report.
pub fn run_segment(
    graph: &PreferenceGraph,
    config: &ExperimentConfig,
) -> Result<(SegmentOutcome, Report)> {
    let outcome = segment_graph(graph, config)?;
    let mut report = Report::new(config.name_or("segment"), config.seed);
    report.config = config.echo()?;
    report.details.insert("route".into(), json!(outcome.route.name()));
    report.details.insert("k".into(), json!(outcome.k));
    if let Some(k) = outcome.k_estimated {
        report.details.insert("k_estimated".into(), json!(k));
    }
    report
        .details
        .insert("normalization".into(), serde_json::to_value(outcome.normalization)?);
    if let Some(pool) = outcome.alpha_pool {
        report.details.insert("alpha_pool".into(), json!(pool));
    }
    if let Some(d) = &outcome.density {
        report.details.insert("density_peaks".into(), json!(d.n_peaks()));
        report.details.insert("bandwidth".into(), json!(d.bandwidth()));
    }
    report
        .details
        .insert("centers".into(), json!(outcome.segmentation.centers()));
    report
        .details
        .insert("inertia".into(), json!(outcome.segmentation.inertia()));
    report
        .details
        .insert("n_excluded".into(), json!(outcome.excluded.len()));
    report.details.insert("aligned".into(), json!(outcome.aligned));
    report
        .details
        .insert("seconds".into(), json!(outcome.seconds));
    if !outcome.aligned {
        report
            .notes
            .push("segment labels are in arbitrary order".into());
    }
    if !outcome.excluded.is_empty() {
        report.notes.push(format!(
            "{} customers had no usable scores and were left unassigned",
            outcome.excluded.len()
        ));
    }
    report.validate()?;
    Ok((outcome, report))
}

/// Write the standard segmentation outputs into `dir`: assignments.csv,
/// centers.csv, report.json, and density.csv when a density was estimated.
/// Returns the paths written.
pub fn write_segment_outputs(
    graph: &PreferenceGraph,
    outcome: &SegmentOutcome,
    report: &Report,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let ids: Vec<String> = (0..graph.n_customers())
        .map(|i| graph.customer_id(i).to_string())
        .collect();
    let assignments = dir.join("assignments.csv");
    outcome.segmentation.to_csv(&assignments, Some(&ids))?;
    written.push(assignments);
    let centers = dir.join("centers.csv");
    write_centers_csv(&centers, outcome.segmentation.centers())?;
    written.push(centers);
    if let Some(density) = &outcome.density {
        let path = dir.join("density.csv");
        density.to_csv(&path)?;
        written.push(path);
    }
    let report_path = dir.join("report.json");
    report.write(&report_path)?;
    written.push(report_path);
    Ok(written)
}

fn write_centers_csv(path: &Path, centers: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dims = centers.first().map_or(0, Vec::len);
    let mut header = vec!["segment".to_string()];
    header.extend((0..dims).map(|d| format!("h{d}")));
    w.write_record(&header)?;
    for (s, center) in centers.iter().enumerate() {
        let mut record = vec![s.to_string()];
        record.extend(center.iter().map(|v| format!("{v}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

struct Table1Rep {
    proj: Option<(f64, f64)>,
    lc: Option<(f64, f64)>,
}

/// Run the benchmark grid: for every (k, sparsity) cell, draw `reps`
/// synthetic populations, segment each with the configured methods, and
/// report mean and standard deviation of segment-recovery accuracy.
///
/// Replications are independent jobs executed in parallel and reduced in a
/// fixed order, so the report depends only on the config and seed.
pub fn run_table1(
    ks: &[usize],
    sparsities: &[f64],
    reps: usize,
    config: &ExperimentConfig,
) -> Result<Report> {
    config.validate()?;
    if ks.is_empty() || sparsities.is_empty() {
        return Err(Error::InvalidParameter {
            message: "the benchmark grid needs at least one k and one sparsity".into(),
        });
    }
    if reps == 0 {
        return Err(Error::InvalidParameter {
            message: "replications must be at least 1".into(),
        });
    }
    let cells: Vec<(usize, f64)> = ks
        .iter()
        .flat_map(|&k| sparsities.iter().map(move |&s| (k, s)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let results: Vec<Table1Rep> = jobs
        .par_iter()
        .map(|&(cell, rep)| table1_rep(cells[cell], cell, rep, reps, config))
        .collect::<Result<Vec<_>>>()?;
    let mut report = Report::new(config.name_or("table1"), config.seed);
    report.config = config.echo()?;
    for (cell, &(k, sparsity)) in cells.iter().enumerate() {
        let slice = &results[cell * reps..(cell + 1) * reps];
        for method in &config.methods {
            let stats: Vec<(f64, f64)> = slice
                .iter()
                .map(|r| match method {
                    Method::Proj => r.proj.expect("requested method was run"),
                    Method::Lc => r.lc.expect("requested method was run"),
                })
                .collect();
            let accs: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let secs: Vec<f64> = stats.iter().map(|s| s.1).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&accs);
            let (seconds_mean, _) = mean_std(&secs);
            report.rows.push(ReportRow {
                method: method.name().to_string(),
                k,
                sparsity: Some(sparsity),
                ell: None,
                accuracy_mean,
                accuracy_std,
                seconds_mean,
                misclassification: None,
                seeds: reps,
            });
        }
    }
    report.details.insert("ks".into(), json!(ks));
    report.details.insert("sparsities".into(), json!(sparsities));
    report.details.insert("replications".into(), json!(reps));
    report.validate()?;
    Ok(report)
}

fn table1_rep(
    (k, sparsity): (usize, f64),
    cell: usize,
    rep: usize,
    reps: usize,
    config: &ExperimentConfig,
) -> Result<Table1Rep> {
    let flat = (cell * reps + rep) as u64;
    let spec = sample_table1_model(k, sparsity, derive_seed_indexed(config.seed, "table1-data", flat))?;
    let truth = gen_lc_ind(&spec)?;
    let graph = truth.graph();
    let mut out = Table1Rep { proj: None, lc: None };
    for method in &config.methods {
        match method {
            Method::Proj => {
                let start = Instant::now();
                let pooled = BernoulliPooled::fit(graph)?;
                let normalization = config.normalization.unwrap_or(Normalization::Entropy);
                let scores = score_scalar(graph, &pooled, normalization)?;
                let points: Vec<Vec<f64>> =
                    scores.present_values().iter().map(|&v| vec![v]).collect();
                let km = KmeansConfig {
                    seed: derive_seed_indexed(config.seed, "table1-proj", flat),
                    ..config.kmeans.clone()
                };
                let seg = kmeans(&points, k, &km)?
                    .with_customer_map(&scores.present_indices(), graph.n_customers())?;
                let seg = align_labels(
                    &seg,
                    AlignMode::ByScore {
                        alpha_pool: pooled.alpha_pool(),
                    },
                )?;
                let seconds = elapsed_secs(start);
                out.proj = Some((accuracy(seg.labels(), truth.z())?, seconds));
            }
            Method::Lc => {
                let start = Instant::now();
                let em = EmConfig {
                    seed: derive_seed_indexed(config.seed, "table1-lc", flat),
                    ..config.em.clone()
                };
                let model = em_fit(graph, k, &em)?;
                let raw = em_assign(&model);
                // Classes come out of EM in arbitrary order; relabel them
                // by ascending like-probability to match the generator.
                let ranks = ascending_ranks(model.alpha());
                let labels: Vec<Option<usize>> = raw.iter().map(|&z| Some(ranks[z])).collect();
                let seconds = elapsed_secs(start);
                out.lc = Some((accuracy(&labels, truth.z())?, seconds));
            }
        }
    }
    Ok(out)
}

/// Per-degree summary of a concentration run.
#[derive(Debug, Clone)]
pub struct ConcentrationCell {
    pub ell: usize,
    /// (epsilon, mean fraction of customers whose score deviates from
    /// their segment center by more than epsilon, relatively).
    pub exceedance: Vec<(f64, f64)>,
    /// Mean percent of customers the nearest-center rule got wrong.
    pub misclassification: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

/// Typed companion to the concentration report.
#[derive(Debug, Clone)]
pub struct ConcentrationOutcome {
    pub cells: Vec<ConcentrationCell>,
    /// Theoretical centers coincide; separation is impossible by design.
    pub degenerate: bool,
    pub constants: Option<SeparationConstants>,
}

struct ConcentrationRep {
    fractions: Vec<f64>,
    accuracy: f64,
    seconds: f64,
}

/// Measure score concentration on regular designs: for each degree in
/// `ells`, generate `reps` populations where every customer rates exactly
/// that many items, score them against the pooled fit, and record how often
/// scores deviate from their theoretical segment center by more than each
/// epsilon in [`CONCENTRATION_EPSILONS`], plus the misclassification rate
/// of nearest-center assignment.
///
/// Degenerate populations (balanced pooled like-fraction, or identical
/// segment parameters) are run anyway and flagged in the report notes;
/// they are the negative controls.
pub fn run_concentration(
    spec: &SynthSpecInd,
    ells: &[usize],
    reps: usize,
    config: &ExperimentConfig,
) -> Result<(ConcentrationOutcome, Report)> {
    config.validate()?;
    spec.validate()?;
    if ells.is_empty() {
        return Err(Error::InvalidParameter {
            message: "at least one degree is required".into(),
        });
    }
    if reps == 0 {
        return Err(Error::InvalidParameter {
            message: "replications must be at least 1".into(),
        });
    }
    let alpha_rows: Vec<Vec<f64>> = spec.alpha.iter().map(|&a| vec![a]).collect();
    let centers = CenterSet::theoretical(&alpha_rows, &spec.q)?;
    let degenerate = centers.is_degenerate(0);
    let (constants, degenerate_note) = match separation_constants(&centers) {
        Ok(c) => (Some(c), None),
        Err(
            e @ (Error::DegenerateCenters | Error::EqualParameters { .. } | Error::ZeroWeights),
        ) => (None, Some(format!("no separation guarantee: {e}"))),
        Err(e) => return Err(e),
    };
    let jobs: Vec<(usize, usize)> = (0..ells.len())
        .flat_map(|e| (0..reps).map(move |r| (e, r)))
        .collect();
    let results: Vec<ConcentrationRep> = jobs
        .par_iter()
        .map(|&(ei, rep)| {
            concentration_rep(spec, ells[ei], (ei * reps + rep) as u64, &centers, degenerate, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(ells.len());
    let mut report = Report::new(config.name_or("concentration"), config.seed);
    report.config = config.echo()?;
    let mut exceedance_detail = Vec::new();
    for (ei, &ell) in ells.iter().enumerate() {
        let slice = &results[ei * reps..(ei + 1) * reps];
        let accs: Vec<f64> = slice.iter().map(|r| r.accuracy).collect();
        let secs: Vec<f64> = slice.iter().map(|r| r.seconds).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&accs);
        let (seconds_mean, _) = mean_std(&secs);
        let mut exceedance = Vec::with_capacity(CONCENTRATION_EPSILONS.len());
        for (j, &eps) in CONCENTRATION_EPSILONS.iter().enumerate() {
            let fracs: Vec<f64> = slice.iter().map(|r| r.fractions[j]).collect();
            let (fraction, _) = mean_std(&fracs);
            exceedance.push((eps, fraction));
            exceedance_detail.push(json!({
                "ell": ell,
                "epsilon": eps,
                "fraction": fraction,
            }));
        }
        let misclassification = 100.0 - accuracy_mean;
        report.rows.push(ReportRow {
            method: "proj-nn".to_string(),
            k: spec.k,
            sparsity: None,
            ell: Some(ell),
            accuracy_mean,
            accuracy_std,
            seconds_mean,
            misclassification: Some(misclassification),
            seeds: reps,
        });
        cells.push(ConcentrationCell {
            ell,
            exceedance,
            misclassification,
            accuracy: accuracy_mean,
            seconds: seconds_mean,
        });
    }
    report
        .details
        .insert("epsilons".into(), json!(CONCENTRATION_EPSILONS));
    report
        .details
        .insert("exceedance".into(), Value::Array(exceedance_detail));
    report.details.insert("spec".into(), serde_json::to_value(spec)?);
    if let Some(c) = &constants {
        report.details.insert("separation".into(), serde_json::to_value(c)?);
    }
    if let Some(note) = degenerate_note {
        report.notes.push(note);
    }
    report.validate()?;
    Ok((
        ConcentrationOutcome {
            cells,
            degenerate,
            constants,
        },
        report,
    ))
}

fn concentration_rep(
    spec: &SynthSpecInd,
    ell: usize,
    flat: u64,
    centers: &CenterSet,
    degenerate: bool,
    config: &ExperimentConfig,
) -> Result<ConcentrationRep> {
    let rep_spec = SynthSpecInd {
        seed: derive_seed_indexed(config.seed, "concentration-data", flat),
        ..spec.clone()
    };
    let truth = gen_lc_ind_regular(&rep_spec, ell)?;
    let graph = truth.graph();
    let start = Instant::now();
    let pooled = BernoulliPooled::fit(graph)?;
    let normalization = config.normalization.unwrap_or(Normalization::Entropy);
    let scores = score_scalar(graph, &pooled, normalization)?;
    let assigned: Vec<Option<usize>> = if degenerate {
        // All theoretical centers coincide at 1, so every scored customer
        // ties; mirror the classifier's lowest-index rule.
        (0..graph.n_customers())
            .map(|i| scores.get(i).map(|_| 0))
            .collect()
    } else {
        nn_classify_scalar(&scores, centers)?
    };
    let seconds = elapsed_secs(start);
    let mut exceed = vec![0usize; CONCENTRATION_EPSILONS.len()];
    let mut scored = 0usize;
    for (i, &z) in truth.z().iter().enumerate() {
        if let Some(s) = scores.get(i) {
            scored += 1;
            let h = centers.center(z)[0];
            let rel = (s - h).abs() / h;
            for (j, &eps) in CONCENTRATION_EPSILONS.iter().enumerate() {
                if rel > eps {
                    exceed[j] += 1;
                }
            }
        }
    }
    if scored == 0 {
        return Err(Error::NothingToEvaluate);
    }
    Ok(ConcentrationRep {
        fractions: exceed.iter().map(|&c| c as f64 / scored as f64).collect(),
        accuracy: accuracy(&assigned, truth.z())?,
        seconds,
    })
}

/// Typed companion to the categorical concentration report.
#[derive(Debug, Clone)]
pub struct CatConcentrationOutcome {
    /// Categories the classifier was restricted to.
    pub kept: Vec<usize>,
    pub accuracy: f64,
    pub misclassification: f64,
    /// (epsilon, mean fraction of customers whose score row deviates from
    /// their segment's center row by more than epsilon in relative L1).
    pub exceedance: Vec<(f64, f64)>,
    pub seconds: f64,
    /// Kept categories whose pooled like-fraction is balanced, making
    /// their centers uninformative.
    pub degenerate_categories: Vec<usize>,
}

struct CatRep {
    fractions: Vec<f64>,
    accuracy: f64,
    seconds: f64,
}

/// Categorical concentration run: generate `reps` populations from `spec`,
/// score per category, and classify by nearest theoretical center row,
/// optionally restricted to the categories in `keep`. Restricting to
/// degenerate categories is the designed failure case: accuracy falls to
/// the largest segment share.
pub fn run_concentration_cat(
    spec: &SynthSpecCat,
    keep: Option<&[usize]>,
    reps: usize,
    config: &ExperimentConfig,
) -> Result<(CatConcentrationOutcome, Report)> {
    config.validate()?;
    spec.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter {
            message: "replications must be at least 1".into(),
        });
    }
    let b = spec.n_b.len();
    let full = CenterSet::theoretical(&spec.alpha, &spec.q)?;
    let kept: Vec<usize> = match keep {
        Some(k) => k.to_vec(),
        None => (0..b).collect(),
    };
    let centers = full.restricted(&kept)?;
    let degenerate_categories: Vec<usize> = kept
        .iter()
        .copied()
        .filter(|&c| full.is_degenerate(c))
        .collect();
    let results: Vec<CatRep> = (0..reps)
        .into_par_iter()
        .map(|rep| cat_rep(spec, rep as u64, &kept, &centers, config))
        .collect::<Result<Vec<_>>>()?;
    let accs: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let secs: Vec<f64> = results.iter().map(|r| r.seconds).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&accs);
    let (seconds_mean, _) = mean_std(&secs);
    let mut exceedance = Vec::with_capacity(CONCENTRATION_EPSILONS.len());
    let mut exceedance_detail = Vec::new();
    for (j, &eps) in CONCENTRATION_EPSILONS.iter().enumerate() {
        let fracs: Vec<f64> = results.iter().map(|r| r.fractions[j]).collect();
        let (fraction, _) = mean_std(&fracs);
        exceedance.push((eps, fraction));
        exceedance_detail.push(json!({ "epsilon": eps, "fraction": fraction }));
    }
    let misclassification = 100.0 - accuracy_mean;
    let mut report = Report::new(config.name_or("concentration-cat"), config.seed);
    report.config = config.echo()?;
    report.rows.push(ReportRow {
        method: "proj-nn".to_string(),
        k: spec.k,
        sparsity: None,
        ell: None,
        accuracy_mean,
        accuracy_std,
        seconds_mean,
        misclassification: Some(misclassification),
        seeds: reps,
    });
    report.details.insert("kept_categories".into(), json!(kept));
    report
        .details
        .insert("epsilons".into(), json!(CONCENTRATION_EPSILONS));
    report
        .details
        .insert("exceedance".into(), Value::Array(exceedance_detail));
    report.details.insert("spec".into(), serde_json::to_value(spec)?);
    if !degenerate_categories.is_empty() {
        report.details.insert(
            "degenerate_categories".into(),
            json!(degenerate_categories),
        );
        if degenerate_categories.len() == kept.len() {
            report.notes.push(
                "every kept category is degenerate; centers coincide and segments cannot be \
                 separated"
                    .into(),
            );
        } else {
            report.notes.push(format!(
                "{} of {} kept categories are degenerate",
                degenerate_categories.len(),
                kept.len()
            ));
        }
    }
    report.validate()?;
    Ok((
        CatConcentrationOutcome {
            kept,
            accuracy: accuracy_mean,
            misclassification,
            exceedance,
            seconds: seconds_mean,
            degenerate_categories,
        },
        report,
    ))
}

fn cat_rep(
    spec: &SynthSpecCat,
    rep: u64,
    kept: &[usize],
    centers: &CenterSet,
    config: &ExperimentConfig,
) -> Result<CatRep> {
    let rep_spec = SynthSpecCat {
        seed: derive_seed_indexed(config.seed, "concentration-cat-data", rep),
        ..spec.clone()
    };
    let truth = gen_lc_ind_cat(&rep_spec)?;
    let graph = truth.graph();
    let b = graph.n_categories();
    let start = Instant::now();
    let pooled = CategoryPooled::fit(graph)?;
    let models: Vec<BernoulliPooled> = (0..b).map(|c| pooled.category_model(c)).collect();
    let refs: Vec<&dyn PooledModel> = models.iter().map(|m| m as &dyn PooledModel).collect();
    let normalization = config.normalization.unwrap_or(Normalization::Entropy);
    let matrix = pscore_matrix(graph, &refs, normalization)?;
    let sub = matrix.select_columns(kept)?;
    let assigned = nn_classify_vector(&sub, centers, &ClassifyOptions::default())?;
    let seconds = elapsed_secs(start);
    let mut exceed = vec![0usize; CONCENTRATION_EPSILONS.len()];
    for (i, &z) in truth.z().iter().enumerate() {
        let center = centers.center(z);
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, &h) in center.iter().enumerate() {
            let s = sub.get(i, c).expect("regular design rates every category");
            num += (s - h).abs();
            den += h;
        }
        let rel = num / den;
        for (j, &eps) in CONCENTRATION_EPSILONS.iter().enumerate() {
            if rel > eps {
                exceed[j] += 1;
            }
        }
    }
    let m = graph.n_customers();
    Ok(CatRep {
        fractions: exceed.iter().map(|&c| c as f64 / m as f64).collect(),
        accuracy: accuracy(&assigned, truth.z())?,
        seconds,
    })
}

/// Holdout prediction: fit on `train`, predict the sign of every rating in
/// `test`, and compare three rules. The population baseline predicts the
/// pooled majority sign for everyone; the projection rule predicts each
/// segment's majority sign after running the scalar pipeline; the
/// latent-class rule thresholds the fitted mixture's like-probability per
/// customer. Test customers absent from the training graph are excluded
/// and counted.
pub fn run_predict(
    train: &PreferenceGraph,
    test: &PreferenceGraph,
    config: &ExperimentConfig,
) -> Result<Report> {
    config.validate()?;
    // The two graphs may list the same symbols in different orders (CSV
    // inference follows first appearance); translate test label indices
    // onto the training alphabet.
    let relabel: Option<Vec<u32>> = if train.alphabet() == test.alphabet() {
        None
    } else {
        let mut map = Vec::with_capacity(test.alphabet().len());
        for symbol in test.alphabet().symbols() {
            match train.alphabet().index_of(symbol) {
                Some(i) => map.push(i as u32),
                None => {
                    return Err(Error::AlphabetMismatch {
                        model: train.alphabet().symbols().join(", "),
                        graph: test.alphabet().symbols().join(", "),
                    })
                }
            }
        }
        Some(map)
    };
    let as_train = |label: u32| match &relabel {
        Some(map) => map[label as usize],
        None => label,
    };
    let like = train
        .alphabet()
        .like_index()
        .ok_or_else(|| Error::NonBinaryAlphabet {
            got: train.alphabet().symbols().join(","),
        })? as u32;
    let train_index: HashMap<&str, usize> = (0..train.n_customers())
        .map(|i| (train.customer_id(i), i))
        .collect();
    let mut matched: Vec<(usize, usize)> = Vec::new();
    let mut absent = 0usize;
    let mut absent_ratings = 0usize;
    for ti in 0..test.n_customers() {
        match train_index.get(test.customer_id(ti)) {
            Some(&i) => matched.push((ti, i)),
            None => {
                absent += 1;
                absent_ratings += test.degree(ti);
            }
        }
    }
    let mut report = Report::new(config.name_or("predict"), config.seed);
    report.config = config.echo()?;

    // Population baseline: one sign for everybody.
    let start = Instant::now();
    let pooled = BernoulliPooled::fit(train)?;
    let pop_like = pooled.alpha_pool() >= 0.5;
    let mut correct = 0usize;
    let mut total = 0usize;
    for &(ti, _) in &matched {
        for &(_, label) in test.row(ti) {
            total += 1;
            if (as_train(label) == like) == pop_like {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::NothingToEvaluate);
    }
    let pop_seconds = elapsed_secs(start);
    report.rows.push(ReportRow {
        method: "pop".to_string(),
        k: 1,
        sparsity: None,
        ell: None,
        accuracy_mean: 100.0 * correct as f64 / total as f64,
        accuracy_std: 0.0,
        seconds_mean: pop_seconds,
        misclassification: None,
        seeds: 1,
    });
    report.details.insert("alpha_pool".into(), json!(pooled.alpha_pool()));

    for method in &config.methods {
        let k = config.k.ok_or_else(|| Error::InvalidParameter {
            message: "segment-based prediction needs an explicit k".into(),
        })?;
        match method {
            Method::Proj => {
                let start = Instant::now();
                let normalization = config.normalization.unwrap_or(Normalization::Entropy);
                let scores = score_scalar(train, &pooled, normalization)?;
                let points: Vec<Vec<f64>> =
                    scores.present_values().iter().map(|&v| vec![v]).collect();
                let km = KmeansConfig {
                    seed: derive_seed(config.seed, "predict-proj"),
                    ..config.kmeans.clone()
                };
                let seg = kmeans(&points, k, &km)?
                    .with_customer_map(&scores.present_indices(), train.n_customers())?;
                // Majority sign per segment from the raw training ratings.
                let mut likes = vec![0usize; k];
                let mut counts = vec![0usize; k];
                for i in 0..train.n_customers() {
                    if let Some(z) = seg.label(i) {
                        for &(_, label) in train.row(i) {
                            counts[z] += 1;
                            if label == like {
                                likes[z] += 1;
                            }
                        }
                    }
                }
                let seg_like: Vec<bool> = (0..k)
                    .map(|z| {
                        if counts[z] == 0 {
                            pop_like
                        } else {
                            likes[z] as f64 / counts[z] as f64 >= 0.5
                        }
                    })
                    .collect();
                let mut correct = 0usize;
                let mut total = 0usize;
                let mut unsegmented = 0usize;
                let mut seg_correct = vec![0usize; k];
                let mut seg_total = vec![0usize; k];
                for &(ti, i) in &matched {
                    match seg.label(i) {
                        Some(z) => {
                            for &(_, label) in test.row(ti) {
                                total += 1;
                                seg_total[z] += 1;
                                if (as_train(label) == like) == seg_like[z] {
                                    correct += 1;
                                    seg_correct[z] += 1;
                                }
                            }
                        }
                        None => unsegmented += 1,
                    }
                }
                if total == 0 {
                    return Err(Error::NothingToEvaluate);
                }
                let seconds = elapsed_secs(start);
                report.rows.push(ReportRow {
                    method: "proj".to_string(),
                    k,
                    sparsity: None,
                    ell: None,
                    accuracy_mean: 100.0 * correct as f64 / total as f64,
                    accuracy_std: 0.0,
                    seconds_mean: seconds,
                    misclassification: None,
                    seeds: 1,
                });
                let per_segment: Vec<Value> = (0..k)
                    .map(|z| {
                        let acc = if seg_total[z] == 0 {
                            Value::Null
                        } else {
                            json!(100.0 * seg_correct[z] as f64 / seg_total[z] as f64)
                        };
                        json!({ "segment": z, "ratings": seg_total[z], "accuracy": acc })
                    })
                    .collect();
                report
                    .details
                    .insert("proj_per_segment".into(), Value::Array(per_segment));
                if unsegmented > 0 {
                    report
                        .details
                        .insert("proj_unsegmented".into(), json!(unsegmented));
                }
            }
            Method::Lc => {
                let start = Instant::now();
                let em = EmConfig {
                    seed: derive_seed(config.seed, "predict-lc"),
                    ..config.em.clone()
                };
                let model = em_fit(train, k, &em)?;
                let mut correct = 0usize;
                let mut total = 0usize;
                for &(ti, i) in &matched {
                    let pred = mixture_prediction(&model, i) >= 0.5;
                    for &(_, label) in test.row(ti) {
                        total += 1;
                        if (as_train(label) == like) == pred {
                            correct += 1;
                        }
                    }
                }
                if total == 0 {
                    return Err(Error::NothingToEvaluate);
                }
                let seconds = elapsed_secs(start);
                report.rows.push(ReportRow {
                    method: "lc".to_string(),
                    k,
                    sparsity: None,
                    ell: None,
                    accuracy_mean: 100.0 * correct as f64 / total as f64,
                    accuracy_std: 0.0,
                    seconds_mean: seconds,
                    misclassification: None,
                    seeds: 1,
                });
            }
        }
    }
    if absent > 0 {
        report.notes.push(format!(
            "{absent} test customers are missing from the training graph and were excluded"
        ));
    }
    report.details.insert("excluded_test_customers".into(), json!(absent));
    report
        .details
        .insert("excluded_test_ratings".into(), json!(absent_ratings));
    report
        .details
        .insert("evaluated_test_ratings".into(), json!(total));
    report.validate()?;
    Ok(report)
}

/// Split a graph into train and test by assigning each observation to the
/// test side independently with probability `test_fraction`. Both halves
/// keep the full customer, item, and category universe, so customer rows
/// may come out empty.
pub fn split_holdout(
    graph: &PreferenceGraph,
    test_fraction: f64,
    seed: u64,
) -> Result<(PreferenceGraph, PreferenceGraph)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            message: format!("test fraction must be in (0, 1), got {test_fraction}"),
        });
    }
    let m = graph.n_customers();
    let n = graph.n_items();
    let mut train_rows: Vec<Vec<(u32, u32)>> = Vec::with_capacity(m);
    let mut test_rows: Vec<Vec<(u32, u32)>> = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = stream_indexed(seed, "holdout", i as u64);
        let mut train_row = Vec::new();
        let mut test_row = Vec::new();
        for &obs in graph.row(i) {
            if rng.gen::<f64>() < test_fraction {
                test_row.push(obs);
            } else {
                train_row.push(obs);
            }
        }
        train_rows.push(train_row);
        test_rows.push(test_row);
    }
    let category_of: Vec<u32> = (0..n).map(|j| graph.category_of(j) as u32).collect();
    let customer_ids: Vec<String> = (0..m).map(|i| graph.customer_id(i).to_string()).collect();
    let item_ids: Vec<String> = (0..n).map(|j| graph.item_id(j).to_string()).collect();
    let category_ids: Vec<String> = (0..graph.n_categories())
        .map(|b| graph.category_id(b).to_string())
        .collect();
    let train = PreferenceGraph::from_parts(
        graph.alphabet().clone(),
        category_of.clone(),
        train_rows,
        customer_ids.clone(),
        item_ids.clone(),
        category_ids.clone(),
    )?;
    let test = PreferenceGraph::from_parts(
        graph.alphabet().clone(),
        category_of,
        test_rows,
        customer_ids,
        item_ids,
        category_ids,
    )?;
    Ok((train, test))
}

/// Mean and sample standard deviation (ddof 1; zero below two values).
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rank of each entry under ascending order: the smallest value gets 0.
fn ascending_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0usize; values.len()];
    for (rank, &idx) in order.iter().enumerate() {
        ranks[idx] = rank;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelAlphabet;

    fn quiet_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 11,
            ..ExperimentConfig::default()
        }
    }

    fn two_segment_spec(seed: u64) -> SynthSpecInd {
        SynthSpecInd {
            m: 300,
            n: 400,
            k: 2,
            q: vec![0.6, 0.4],
            alpha: vec![0.2, 0.8],
            p: 1.0,
            seed,
        }
    }

    fn worked_cat_spec(seed: u64) -> SynthSpecCat {
        SynthSpecCat {
            m: 200,
            n_b: vec![80, 80],
            k: 2,
            q: vec![0.5, 0.5],
            alpha: vec![vec![0.2, 0.5], vec![0.7, 0.5]],
            ell_b: vec![60, 60],
            seed,
        }
    }

    /// Highest accuracy over every relabeling of the assignment; for
    /// unaligned routes where only the partition is meaningful.
    fn best_relabel_accuracy(assigned: &[Option<usize>], truth: &[usize], k: usize) -> f64 {
        fn permutations(k: usize) -> Vec<Vec<usize>> {
            if k == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in permutations(k - 1) {
                for pos in 0..k {
                    let mut with = p.clone();
                    with.insert(pos, k - 1);
                    out.push(with);
                }
            }
            out
        }
        permutations(k)
            .into_iter()
            .map(|perm| {
                let relabeled: Vec<Option<usize>> =
                    assigned.iter().map(|l| l.map(|z| perm[z])).collect();
                accuracy(&relabeled, truth).unwrap()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut c = quiet_config();
        c.replications = 0;
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { .. })));
        let mut c = quiet_config();
        c.methods.clear();
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { .. })));
        let mut c = quiet_config();
        c.methods = vec![Method::Proj, Method::Proj];
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { .. })));
        let mut c = quiet_config();
        c.k = Some(0);
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { .. })));
        let mut c = quiet_config();
        c.rank = Some(0);
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { .. })));
        assert!(quiet_config().validate().is_ok());
    }

    #[test]
    fn schema_accepts_a_real_report_and_rejects_violations() {
        let mut report = Report::new("unit".into(), 3);
        report.rows.push(ReportRow {
            method: "proj".into(),
            k: 2,
            sparsity: Some(0.2),
            ell: None,
            accuracy_mean: 97.5,
            accuracy_std: 1.1,
            seconds_mean: 0.02,
            misclassification: None,
            seeds: 5,
        });
        report.validate().unwrap();

        let mut v = serde_json::to_value(&report).unwrap();
        v["rows"][0]["accuracy_mean"] = json!(150.0);
        let err = validate_report_json(&v).unwrap_err().to_string();
        assert!(err.contains("maximum"), "{err}");

        let mut v = serde_json::to_value(&report).unwrap();
        v["rows"][0]["surprise"] = json!(1);
        assert!(validate_report_json(&v).is_err());

        let mut v = serde_json::to_value(&report).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        let err = validate_report_json(&v).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");

        let mut v = serde_json::to_value(&report).unwrap();
        v["schema"] = json!("something-else/9");
        assert!(validate_report_json(&v).is_err());
    }

    #[test]
    fn merge_json_overlays_nested_objects() {
        let mut base = json!({"a": 1, "nested": {"x": 1, "y": 2}, "list": [1, 2]});
        let patch = json!({"nested": {"y": 9, "z": 3}, "list": [7], "b": true});
        merge_json(&mut base, &patch);
        assert_eq!(
            base,
            json!({"a": 1, "nested": {"x": 1, "y": 9, "z": 3}, "list": [7], "b": true})
        );
    }

    #[test]
    fn ascending_ranks_order_by_value() {
        assert_eq!(ascending_ranks(&[0.5, 0.1, 0.9]), vec![1, 0, 2]);
        assert_eq!(ascending_ranks(&[3.0]), vec![0]);
    }

    #[test]
    fn scalar_route_recovers_two_segments_and_aligns() {
        let truth = gen_lc_ind_regular(&two_segment_spec(5), 100).unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            ..quiet_config()
        };
        let (outcome, report) = run_segment(truth.graph(), &config).unwrap();
        assert_eq!(outcome.route, Route::Scalar);
        assert!(outcome.aligned);
        assert!(outcome.excluded.is_empty());
        assert!(outcome.density.is_some());
        // Aligned labels match the generator directly: the pooled
        // like-fraction is below one half, so low scores mean high alpha.
        let acc = accuracy(outcome.segmentation.labels(), truth.z()).unwrap();
        assert!(acc > 95.0, "accuracy {acc}");
        report.validate().unwrap();
        assert_eq!(report.details["route"], json!("scalar"));
    }

    #[test]
    fn auto_k_via_density_finds_two_peaks() {
        let truth = gen_lc_ind_regular(&two_segment_spec(7), 200).unwrap();
        let config = quiet_config();
        let outcome = segment_graph(truth.graph(), &config).unwrap();
        assert_eq!(outcome.k_estimated, Some(2));
        let acc = accuracy(outcome.segmentation.labels(), truth.z()).unwrap();
        assert!(acc > 95.0, "accuracy {acc}");
    }

    #[test]
    fn zero_degree_customers_are_excluded_not_assigned() {
        let alphabet = LabelAlphabet::binary();
        // Customer 4 rated nothing; the others split into clear halves.
        let rows: Vec<Vec<(u32, u32)>> = vec![
            (0..40).map(|j| (j, 0)).collect(),
            (0..40).map(|j| (j, 0)).collect(),
            (0..40).map(|j| (j, 1)).collect(),
            (0..40).map(|j| (j, 1)).collect(),
            Vec::new(),
        ];
        let graph = PreferenceGraph::from_parts(
            alphabet,
            vec![0; 40],
            rows,
            (0..5).map(|i| format!("c{i}")).collect(),
            (0..40).map(|j| format!("i{j}")).collect(),
            vec!["cat0".into()],
        )
        .unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            ..quiet_config()
        };
        let outcome = segment_graph(&graph, &config).unwrap();
        assert_eq!(outcome.excluded, vec![4]);
        assert_eq!(outcome.segmentation.label(4), None);
        assert_eq!(outcome.segmentation.n_assigned(), 4);
    }

    #[test]
    fn matrix_routes_need_an_explicit_k_and_spectral_needs_rank() {
        let truth = gen_lc_ind_cat(&worked_cat_spec(9)).unwrap();
        let auto = quiet_config();
        let err = segment_graph(truth.graph(), &auto).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
        let spectral = ExperimentConfig {
            k: Some(2),
            spectral: true,
            ..quiet_config()
        };
        let err = segment_graph(truth.graph(), &spectral).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn complete_matrix_route_separates_categorical_segments() {
        let truth = gen_lc_ind_cat(&worked_cat_spec(13)).unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            ..quiet_config()
        };
        let outcome = segment_graph(truth.graph(), &config).unwrap();
        assert_eq!(outcome.route, Route::CompleteMatrix);
        assert!(!outcome.aligned);
        let acc = best_relabel_accuracy(outcome.segmentation.labels(), truth.z(), 2);
        assert!(acc > 90.0, "accuracy {acc}");

        let spectral = ExperimentConfig {
            k: Some(2),
            spectral: true,
            rank: Some(1),
            ..quiet_config()
        };
        let outcome = segment_graph(truth.graph(), &spectral).unwrap();
        assert_eq!(outcome.route, Route::SpectralMatrix);
        let acc = best_relabel_accuracy(outcome.segmentation.labels(), truth.z(), 2);
        assert!(acc > 90.0, "spectral accuracy {acc}");
    }

    #[test]
    fn factorized_route_handles_missing_categories() {
        let truth = gen_lc_ind_cat(&worked_cat_spec(17)).unwrap();
        let graph = truth.graph();
        // Drop category 1 entirely for a third of the customers so the
        // score matrix has missing entries.
        let rows: Vec<Vec<(u32, u32)>> = (0..graph.n_customers())
            .map(|i| {
                graph
                    .row(i)
                    .iter()
                    .copied()
                    .filter(|&(j, _)| i % 3 != 0 || graph.category_of(j as usize) == 0)
                    .collect()
            })
            .collect();
        let sparse = PreferenceGraph::from_parts(
            graph.alphabet().clone(),
            (0..graph.n_items())
                .map(|j| graph.category_of(j) as u32)
                .collect(),
            rows,
            (0..graph.n_customers())
                .map(|i| graph.customer_id(i).to_string())
                .collect(),
            (0..graph.n_items())
                .map(|j| graph.item_id(j).to_string())
                .collect(),
            (0..graph.n_categories())
                .map(|b| graph.category_id(b).to_string())
                .collect(),
        )
        .unwrap();
        // Rank 1: with only two score columns a rank-2 fit interpolates
        // every observed row exactly and leaves partial rows unidentified.
        let config = ExperimentConfig {
            k: Some(2),
            rank: Some(1),
            ..quiet_config()
        };
        let outcome = segment_graph(&sparse, &config).unwrap();
        assert_eq!(outcome.route, Route::FactorizedMatrix);
        assert!(outcome.excluded.is_empty());
        let acc = best_relabel_accuracy(outcome.segmentation.labels(), truth.z(), 2);
        assert!(acc > 75.0, "accuracy {acc}");
    }

    #[test]
    fn benchmark_grid_smoke_is_accurate_and_reproducible() {
        let config = ExperimentConfig {
            seed: 21,
            ..ExperimentConfig::default()
        };
        let report = run_table1(&[2], &[0.4], 2, &config).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.k, 2);
            assert_eq!(row.sparsity, Some(0.4));
            assert_eq!(row.seeds, 2);
            assert!(
                row.accuracy_mean > 90.0,
                "{} accuracy {}",
                row.method,
                row.accuracy_mean
            );
            assert!(row.seconds_mean > 0.0);
        }
        let again = run_table1(&[2], &[0.4], 2, &config).unwrap();
        assert_eq!(
            report.with_zeroed_timings().to_json_string().unwrap(),
            again.with_zeroed_timings().to_json_string().unwrap()
        );
    }

    #[test]
    fn concentration_tightens_with_degree() {
        let spec = SynthSpecInd {
            m: 200,
            n: 400,
            ..two_segment_spec(0)
        };
        let config = quiet_config();
        let (outcome, report) = run_concentration(&spec, &[20, 320], 2, &config).unwrap();
        assert!(!outcome.degenerate);
        assert!(outcome.constants.is_some());
        assert_eq!(outcome.cells.len(), 2);
        let loose = outcome.cells[0].exceedance[0].1;
        let tight = outcome.cells[1].exceedance[0].1;
        assert!(
            tight < loose,
            "exceedance at eps=0.02 should shrink: {loose} -> {tight}"
        );
        assert!(outcome.cells[1].misclassification <= outcome.cells[0].misclassification);
        assert!(outcome.cells[1].misclassification < 5.0);
        report.validate().unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].ell, Some(20));
    }

    // In a one-segment population every score estimates the same center,
    // so the cross-customer spread must shrink as degree grows.
    #[test]
    fn score_spread_shrinks_with_degree() {
        let mut spreads = Vec::new();
        for ell in [10usize, 100, 1000] {
            let spec = SynthSpecInd {
                m: 300,
                n: 1000,
                k: 1,
                q: vec![1.0],
                alpha: vec![0.3],
                p: 1.0,
                seed: 60,
            };
            let truth = gen_lc_ind_regular(&spec, ell).unwrap();
            let pooled = BernoulliPooled::fit(truth.graph()).unwrap();
            let scores = pscore_entropy(truth.graph(), &pooled).unwrap();
            let (_, std) = mean_std(&scores.present_values());
            spreads.push(std);
        }
        assert!(
            spreads[0] > spreads[1] && spreads[1] > spreads[2],
            "spread should fall with degree: {spreads:?}"
        );
    }

    #[test]
    fn degenerate_pool_is_flagged_and_stays_at_chance() {
        // Balanced mixture: the pooled like-fraction is exactly one half,
        // so all theoretical centers coincide.
        let spec = SynthSpecInd {
            m: 200,
            n: 400,
            k: 2,
            q: vec![0.5, 0.5],
            alpha: vec![0.3, 0.7],
            p: 1.0,
            seed: 0,
        };
        let config = quiet_config();
        let (outcome, report) = run_concentration(&spec, &[100], 2, &config).unwrap();
        assert!(outcome.degenerate);
        assert!(outcome.constants.is_none());
        assert!(report.notes.iter().any(|n| n.contains("no separation")));
        // Everyone lands in segment 0, which holds exactly half the mass.
        assert_eq!(outcome.cells[0].accuracy, 50.0);
    }

    #[test]
    fn restricted_categories_lose_separation() {
        let spec = worked_cat_spec(23);
        let config = quiet_config();
        // Category 1 is balanced by construction, so even the full run
        // flags it; category 0 still separates the segments.
        let (full, report) = run_concentration_cat(&spec, None, 2, &config).unwrap();
        assert_eq!(full.degenerate_categories, vec![1]);
        assert!(full.accuracy > 95.0, "full accuracy {}", full.accuracy);
        report.validate().unwrap();

        let (restricted, report) = run_concentration_cat(&spec, Some(&[1]), 2, &config).unwrap();
        assert_eq!(restricted.kept, vec![1]);
        assert_eq!(restricted.degenerate_categories, vec![1]);
        assert_eq!(restricted.accuracy, 50.0);
        assert!(report.notes.iter().any(|n| n.contains("degenerate")));
    }

    #[test]
    fn prediction_beats_the_population_baseline() {
        let truth = gen_lc_ind_regular(&two_segment_spec(29), 60).unwrap();
        let (train, test) = split_holdout(truth.graph(), 0.25, 31).unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            seed: 37,
            ..ExperimentConfig::default()
        };
        let report = run_predict(&train, &test, &config).unwrap();
        let acc = |name: &str| {
            report
                .rows
                .iter()
                .find(|r| r.method == name)
                .map(|r| r.accuracy_mean)
                .unwrap()
        };
        let (pop, proj, lc) = (acc("pop"), acc("proj"), acc("lc"));
        // alpha_pool = 0.44, so the baseline predicts dislike and is right
        // about 56% of the time; segment-aware rules reach about 80%.
        assert!((50.0..62.0).contains(&pop), "pop {pop}");
        assert!(proj > pop + 10.0, "proj {proj} vs pop {pop}");
        assert!(lc > pop + 10.0, "lc {lc} vs pop {pop}");
        assert_eq!(report.details["excluded_test_customers"], json!(0));
    }

    #[test]
    fn prediction_tolerates_a_permuted_test_alphabet() {
        let truth = gen_lc_ind_regular(&two_segment_spec(67), 60).unwrap();
        let (train, test) = split_holdout(truth.graph(), 0.25, 71).unwrap();
        // Same data, symbols listed in the opposite order: flip every
        // label index and reverse the alphabet.
        let flipped_alphabet = LabelAlphabet::new(vec!["-1", "+1"]).unwrap();
        let flipped_rows: Vec<Vec<(u32, u32)>> = (0..test.n_customers())
            .map(|i| test.row(i).iter().map(|&(j, l)| (j, 1 - l)).collect())
            .collect();
        let flipped = PreferenceGraph::from_parts(
            flipped_alphabet,
            (0..test.n_items())
                .map(|j| test.category_of(j) as u32)
                .collect(),
            flipped_rows,
            (0..test.n_customers())
                .map(|i| test.customer_id(i).to_string())
                .collect(),
            (0..test.n_items())
                .map(|j| test.item_id(j).to_string())
                .collect(),
            (0..test.n_categories())
                .map(|b| test.category_id(b).to_string())
                .collect(),
        )
        .unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            seed: 73,
            ..ExperimentConfig::default()
        };
        let straight = run_predict(&train, &test, &config).unwrap();
        let permuted = run_predict(&train, &flipped, &config).unwrap();
        assert_eq!(
            straight.with_zeroed_timings().to_json_string().unwrap(),
            permuted.with_zeroed_timings().to_json_string().unwrap()
        );

        // A genuinely different alphabet is still rejected.
        let alien = LabelAlphabet::new(vec!["yes", "no"]).unwrap();
        let alien_graph = PreferenceGraph::from_parts(
            alien,
            (0..test.n_items())
                .map(|j| test.category_of(j) as u32)
                .collect(),
            (0..test.n_customers()).map(|i| test.row(i).to_vec()).collect(),
            (0..test.n_customers())
                .map(|i| test.customer_id(i).to_string())
                .collect(),
            (0..test.n_items())
                .map(|j| test.item_id(j).to_string())
                .collect(),
            (0..test.n_categories())
                .map(|b| test.category_id(b).to_string())
                .collect(),
        )
        .unwrap();
        let err = run_predict(&train, &alien_graph, &config).unwrap_err();
        assert!(matches!(err, Error::AlphabetMismatch { .. }));
    }

    #[test]
    fn absent_test_customers_are_excluded_and_counted() {
        let truth = gen_lc_ind_regular(&two_segment_spec(41), 60).unwrap();
        let (train, test) = split_holdout(truth.graph(), 0.25, 43).unwrap();
        // Rename one test customer so it cannot be matched.
        let m = test.n_customers();
        let mut ids: Vec<String> = (0..m).map(|i| test.customer_id(i).to_string()).collect();
        ids[0] = "ghost".into();
        let test = PreferenceGraph::from_parts(
            test.alphabet().clone(),
            (0..test.n_items())
                .map(|j| test.category_of(j) as u32)
                .collect(),
            (0..m).map(|i| test.row(i).to_vec()).collect(),
            ids,
            (0..test.n_items())
                .map(|j| test.item_id(j).to_string())
                .collect(),
            (0..test.n_categories())
                .map(|b| test.category_id(b).to_string())
                .collect(),
        )
        .unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            seed: 47,
            methods: vec![Method::Proj],
            ..ExperimentConfig::default()
        };
        let report = run_predict(&train, &test, &config).unwrap();
        assert_eq!(report.details["excluded_test_customers"], json!(1));
        assert!(report.notes.iter().any(|n| n.contains("excluded")));
    }

    #[test]
    fn holdout_split_partitions_observations() {
        let truth = gen_lc_ind(&SynthSpecInd {
            p: 0.5,
            ..two_segment_spec(53)
        })
        .unwrap();
        let graph = truth.graph();
        let (train, test) = split_holdout(graph, 0.3, 59).unwrap();
        assert_eq!(train.n_customers(), graph.n_customers());
        assert_eq!(test.n_customers(), graph.n_customers());
        assert_eq!(train.n_items(), graph.n_items());
        let mut test_total = 0usize;
        for i in 0..graph.n_customers() {
            let mut merged: Vec<(u32, u32)> = train.row(i).to_vec();
            merged.extend_from_slice(test.row(i));
            merged.sort_unstable();
            let mut original = graph.row(i).to_vec();
            original.sort_unstable();
            assert_eq!(merged, original);
            test_total += test.degree(i);
        }
        // Binomial(total, 0.3) within four sigma.
        let total = graph.n_observations() as f64;
        let sigma = (total * 0.3 * 0.7).sqrt();
        assert!((test_total as f64 - total * 0.3).abs() < 4.0 * sigma);

        let (train2, test2) = split_holdout(graph, 0.3, 59).unwrap();
        for i in 0..graph.n_customers() {
            assert_eq!(train.row(i), train2.row(i));
            assert_eq!(test.row(i), test2.row(i));
        }
        assert!(split_holdout(graph, 0.0, 1).is_err());
        assert!(split_holdout(graph, 1.0, 1).is_err());
    }

    #[test]
    fn segment_outputs_land_on_disk() {
        let truth = gen_lc_ind_regular(&two_segment_spec(61), 50).unwrap();
        let config = ExperimentConfig {
            k: Some(2),
            ..quiet_config()
        };
        let (outcome, report) = run_segment(truth.graph(), &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = write_segment_outputs(truth.graph(), &outcome, &report, dir.path()).unwrap();
        assert_eq!(written.len(), 4);
        for path in &written {
            assert!(path.exists(), "{path:?}");
        }
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let value: Value = serde_json::from_str(&text).unwrap();
        validate_report_json(&value).unwrap();
        let assignments = std::fs::read_to_string(dir.path().join("assignments.csv")).unwrap();
        assert!(assignments.starts_with("customer,segment\n"));
        assert!(assignments.contains("c0,"));
    }
}
