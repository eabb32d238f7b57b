//! Command-line front-end for the segproj library.
//!
//! Exit codes: 0 on success, 2 on validation problems (bad flags, bad
//! input files), 3 on numerical failures (degenerate entropy, identical
//! scores, degenerate centers).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use segproj::corpus::{load_csv, LabelPolicy, ParseOptions, PreferenceGraph};
use segproj::error::{Error, Result};
use segproj::harness::{
    merge_json, run_concentration, run_concentration_cat, run_predict, run_segment, run_table1,
    split_holdout, write_segment_outputs, ExperimentConfig, Method, Report, TABLE1_KS,
    TABLE1_SPARSITIES,
};
use segproj::lcem::{em_assign, em_fit, EmConfig};
use segproj::projection::Normalization;
use segproj::stream::derive_seed;
use segproj::synthgen::{gen_lc_ind, gen_lc_ind_cat, gen_lc_ind_regular, GenSpec, GroundTruth};

#[derive(Parser)]
#[command(
    name = "segproj",
    version,
    about = "Customer segmentation from projection scores against a pooled preference model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment customers by clustering their projection scores.
    Segment(SegmentArgs),
    /// Estimate the number of segments from the score density.
    EstimateK(EstimateKArgs),
    /// Fit the latent-class benchmark with EM and export its assignments.
    Em(EmArgs),
    /// Generate a synthetic preference graph from a spec file.
    Synth(SynthArgs),
    /// Run the benchmark grid comparing projection and latent-class fits.
    Table1(Table1Args),
    /// Measure score concentration and nearest-center classification.
    Concentration(ConcentrationArgs),
    /// Compare holdout prediction rules on a train/test pair.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Proj,
    Lc,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormalizationArg {
    Degree,
    Entropy,
}

#[derive(Clone, Copy, Debug)]
enum KArg {
    Auto,
    Fixed(usize),
}

fn parse_k(s: &str) -> std::result::Result<KArg, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(KArg::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) => Err("k must be at least 1, or \"auto\"".into()),
        Ok(v) => Ok(KArg::Fixed(v)),
        Err(_) => Err(format!("expected an integer or \"auto\", got {s:?}")),
    }
}

/// Flags shared by the analysis commands. A JSON config file passed via
/// --config is merged over the flag values and wins where both are set.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Input ratings CSV: customer,item,label with an optional trailing
    /// category column when there are several categories.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Where to write outputs (directory, or .json path for report-only
    /// commands). Defaults to the current directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Master seed; every random stage derives its own stream from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Segment count, or "auto" to estimate it from the score density.
    #[arg(long, value_parser = parse_k)]
    k: Option<KArg>,
    /// Segmentation method(s) to run where a choice applies.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Score normalization: per-rating average or entropy-relative.
    #[arg(long, value_enum)]
    normalization: Option<NormalizationArg>,
    /// Factorization or spectral projection rank for multi-category scores.
    #[arg(long)]
    rank: Option<usize>,
    /// Project complete score matrices onto --rank singular directions.
    #[arg(long)]
    spectral: bool,
    /// Replications for the experiment commands.
    #[arg(long)]
    reps: Option<usize>,
    /// JSON file with ExperimentConfig fields; overrides the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// The input CSV starts with a header row.
    #[arg(long)]
    has_header: bool,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EstimateKArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EmArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec JSON (families: independent, regular, categorical).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the seed stored in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Also split the graph: each observation lands in test.csv with this
    /// probability, the rest in train.csv.
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Args)]
struct Table1Args {
    #[command(flatten)]
    common: CommonArgs,
    /// Segment counts for the grid.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Sparsity levels for the grid.
    #[arg(long, value_delimiter = ',')]
    sparsities: Option<Vec<f64>>,
}

#[derive(Args)]
struct ConcentrationArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Generator spec JSON; independent and regular specs run the
    /// per-degree sweep, categorical specs the vector classifier.
    #[arg(long)]
    spec: PathBuf,
    /// Degrees to sweep (independent and regular specs).
    #[arg(long, value_delimiter = ',')]
    ells: Option<Vec<usize>>,
    /// Restrict classification to these categories (categorical specs).
    #[arg(long, value_delimiter = ',')]
    keep: Option<Vec<usize>>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Test ratings CSV; customers are matched to --input by id.
    #[arg(long)]
    test: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment(args) => cmd_segment(args),
        Command::EstimateK(args) => cmd_estimate_k(args),
        Command::Em(args) => cmd_em(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Table1(args) => cmd_table1(args),
        Command::Concentration(args) => cmd_concentration(args),
        Command::Predict(args) => cmd_predict(args),
    }
}

/// Build the run config from flags, then let --config override it.
fn build_config(common: &CommonArgs, default_reps: usize) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig {
        seed: common.seed,
        replications: common.reps.unwrap_or(default_reps),
        k: match common.k {
            None | Some(KArg::Auto) => None,
            Some(KArg::Fixed(v)) => Some(v),
        },
        normalization: common.normalization.map(|n| match n {
            NormalizationArg::Degree => Normalization::Degree,
            NormalizationArg::Entropy => Normalization::Entropy,
        }),
        rank: common.rank,
        spectral: common.spectral,
        has_header: common.has_header,
        methods: match common.method {
            None | Some(MethodArg::Both) => vec![Method::Proj, Method::Lc],
            Some(MethodArg::Proj) => vec![Method::Proj],
            Some(MethodArg::Lc) => vec![Method::Lc],
        },
        input: common.input.as_ref().map(|p| p.display().to_string()),
        output: common.output.as_ref().map(|p| p.display().to_string()),
        ..ExperimentConfig::default()
    };
    if let Some(path) = &common.config {
        let patch: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let mut base = serde_json::to_value(&config)?;
        merge_json(&mut base, &patch);
        config = serde_json::from_value(base)?;
    }
    config.validate()?;
    Ok(config)
}

fn load_input(config: &ExperimentConfig) -> Result<PreferenceGraph> {
    let path = config.input.clone().ok_or_else(|| Error::InvalidParameter {
        message: "an input CSV is required; pass --input".into(),
    })?;
    let options = ParseOptions {
        has_header: config.has_header,
        ..ParseOptions::default()
    };
    load_csv(path, &options)
}

fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output
        .clone()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Resolve where a report-only command writes: a .json path is used as is,
/// anything else is treated as a directory.
fn report_path(config: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    let base = output_dir(config);
    if base.extension().is_some_and(|e| e == "json") {
        if let Some(parent) = base.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        Ok(base)
    } else {
        std::fs::create_dir_all(&base)?;
        Ok(base.join(name))
    }
}

fn cmd_segment(args: SegmentArgs) -> Result<()> {
    let config = build_config(&args.common, 1)?;
    let graph = load_input(&config)?;
    let (outcome, report) = run_segment(&graph, &config)?;
    let dir = output_dir(&config);
    let written = write_segment_outputs(&graph, &outcome, &report, &dir)?;
    println!("route: {}", outcome.route.name());
    match outcome.k_estimated {
        Some(k) => println!("k: {k} (estimated from the score density)"),
        None => println!("k: {}", outcome.k),
    }
    if let Some(pool) = outcome.alpha_pool {
        println!("pooled like-fraction: {pool:.4}");
    }
    let m = graph.n_customers();
    println!(
        "assigned: {} of {m} customers{}",
        m - outcome.excluded.len(),
        if outcome.excluded.is_empty() {
            String::new()
        } else {
            format!(" ({} without usable scores)", outcome.excluded.len())
        }
    );
    print_written(&written);
    Ok(())
}

fn cmd_estimate_k(args: EstimateKArgs) -> Result<()> {
    let mut config = build_config(&args.common, 1)?;
    // This command always estimates, whatever --k said.
    config.k = None;
    let graph = load_input(&config)?;
    let (outcome, report) = run_segment(&graph, &config)?;
    let density = outcome
        .density
        .as_ref()
        .expect("the scalar route with k=None always carries a density");
    let k = outcome.k_estimated.expect("k was estimated");
    println!("estimated k: {k}");
    let positions: Vec<String> = density
        .peaks()
        .iter()
        .map(|&p| format!("{:.4}", density.grid()[p]))
        .collect();
    println!("peaks at: {}", positions.join(", "));
    println!("bandwidth: {:.6}", density.bandwidth());
    if args.common.output.is_some() {
        let dir = output_dir(&config);
        std::fs::create_dir_all(&dir)?;
        let density_path = dir.join("density.csv");
        density.to_csv(&density_path)?;
        let report_file = dir.join("report.json");
        report.write(&report_file)?;
        print_written(&[density_path, report_file]);
    }
    Ok(())
}

fn cmd_em(args: EmArgs) -> Result<()> {
    let config = build_config(&args.common, 1)?;
    let k = config.k.ok_or_else(|| Error::InvalidParameter {
        message: "em needs a fixed --k".into(),
    })?;
    let graph = load_input(&config)?;
    let start = std::time::Instant::now();
    let em = EmConfig {
        seed: derive_seed(config.seed, "em"),
        ..config.em.clone()
    };
    let model = em_fit(&graph, k, &em)?;
    let labels = em_assign(&model);
    let seconds = start.elapsed().as_secs_f64().max(1e-9);

    let mut report = Report::new(
        if config.experiment.is_empty() {
            "em".to_string()
        } else {
            config.experiment.clone()
        },
        config.seed,
    );
    report.config = match serde_json::to_value(&config)? {
        Value::Object(map) => map,
        _ => unreachable!(),
    };
    report
        .details
        .insert("q".into(), serde_json::to_value(model.q())?);
    report
        .details
        .insert("alpha".into(), serde_json::to_value(model.alpha())?);
    report.details.insert(
        "log_posterior".into(),
        serde_json::to_value(model.final_log_posterior())?,
    );
    report
        .details
        .insert("iterations".into(), serde_json::to_value(model.iterations_run())?);
    report
        .details
        .insert("restart".into(), serde_json::to_value(model.restart_index())?);
    report
        .details
        .insert("seconds".into(), serde_json::to_value(seconds)?);
    report.validate()?;

    let dir = output_dir(&config);
    std::fs::create_dir_all(&dir)?;
    let assignments = dir.join("assignments.csv");
    write_em_assignments(&assignments, &graph, &labels)?;
    let report_file = dir.join("report.json");
    report.write(&report_file)?;

    println!(
        "k: {k}, log-posterior: {:.4} (restart {}, {} iterations)",
        model.final_log_posterior(),
        model.restart_index(),
        model.iterations_run()
    );
    println!("q: {}", join_fixed(model.q()));
    println!("alpha: {}", join_fixed(model.alpha()));
    print_written(&[assignments, report_file]);
    Ok(())
}

fn join_fixed(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn write_em_assignments(path: &Path, graph: &PreferenceGraph, labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["customer", "segment"])?;
    for (i, &z) in labels.iter().enumerate() {
        w.write_record([graph.customer_id(i), &z.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let mut spec: GenSpec = serde_json::from_str(&std::fs::read_to_string(&args.spec)?)?;
    if let Some(seed) = args.seed {
        match &mut spec {
            GenSpec::Independent(s) => s.seed = seed,
            GenSpec::Regular { base, .. } => base.seed = seed,
            GenSpec::Categorical(s) => s.seed = seed,
        }
    }
    let (truth, family, seed): (GroundTruth, &str, u64) = match &spec {
        GenSpec::Independent(s) => (gen_lc_ind(s)?, "independent", s.seed),
        GenSpec::Regular { base, ell } => (gen_lc_ind_regular(base, *ell)?, "regular", base.seed),
        GenSpec::Categorical(s) => (gen_lc_ind_cat(s)?, "categorical", s.seed),
    };
    let dir = args.output.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    let graph = truth.graph();
    match args.holdout {
        Some(fraction) => {
            let (train, test) = split_holdout(graph, fraction, seed)?;
            let train_path = dir.join("train.csv");
            train.to_csv(&train_path)?;
            let test_path = dir.join("test.csv");
            test.to_csv(&test_path)?;
            println!(
                "split {} observations: {} train, {} test",
                graph.n_observations(),
                train.n_observations(),
                test.n_observations()
            );
            written.push(train_path);
            written.push(test_path);
        }
        None => {
            let graph_path = dir.join("graph.csv");
            graph.to_csv(&graph_path)?;
            written.push(graph_path);
        }
    }
    let truth_path = dir.join("truth.csv");
    truth.segments_to_csv(&truth_path)?;
    written.push(truth_path);
    let spec_path = dir.join("spec.json");
    let mut spec_text = serde_json::to_string_pretty(&spec)?;
    spec_text.push('\n');
    std::fs::write(&spec_path, spec_text)?;
    written.push(spec_path);
    println!(
        "family: {family}; {} customers, {} items, {} observations",
        graph.n_customers(),
        graph.n_items(),
        graph.n_observations()
    );
    print_written(&written);
    Ok(())
}

fn cmd_table1(args: Table1Args) -> Result<()> {
    let config = build_config(&args.common, 30)?;
    let ks = args.ks.unwrap_or_else(|| TABLE1_KS.to_vec());
    let sparsities = args.sparsities.unwrap_or_else(|| TABLE1_SPARSITIES.to_vec());
    let report = run_table1(&ks, &sparsities, config.replications, &config)?;
    println!("k  sparsity  method  accuracy         seconds");
    for row in &report.rows {
        println!(
            "{:<2} {:<9.2} {:<7} {:>6.2} +/- {:<5.2} {:>8.4}",
            row.k,
            row.sparsity.unwrap_or(f64::NAN),
            row.method,
            row.accuracy_mean,
            row.accuracy_std,
            row.seconds_mean
        );
    }
    let path = report_path(&config, "report.json")?;
    report.write(&path)?;
    print_written(&[path]);
    Ok(())
}

fn cmd_concentration(args: ConcentrationArgs) -> Result<()> {
    let config = build_config(&args.common, 10)?;
    let spec: GenSpec = serde_json::from_str(&std::fs::read_to_string(&args.spec)?)?;
    let report = match &spec {
        GenSpec::Independent(s) => {
            let ells = args.ells.unwrap_or_else(|| vec![10, 50, 100, 500, 1000]);
            let (outcome, report) =
                run_concentration(s, &ells, config.replications, &config)?;
            print_concentration(&outcome);
            report
        }
        GenSpec::Regular { base, ell } => {
            let ells = args.ells.unwrap_or_else(|| vec![*ell]);
            let (outcome, report) =
                run_concentration(base, &ells, config.replications, &config)?;
            print_concentration(&outcome);
            report
        }
        GenSpec::Categorical(s) => {
            let (outcome, report) =
                run_concentration_cat(s, args.keep.as_deref(), config.replications, &config)?;
            println!(
                "kept categories: {}",
                outcome
                    .kept
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            println!(
                "accuracy: {:.2}%  misclassification: {:.2}%",
                outcome.accuracy, outcome.misclassification
            );
            for &(eps, fraction) in &outcome.exceedance {
                println!("exceedance({eps}): {fraction:.4}");
            }
            report
        }
    };
    for note in &report.notes {
        println!("note: {note}");
    }
    let path = report_path(&config, "report.json")?;
    report.write(&path)?;
    print_written(&[path]);
    Ok(())
}

fn print_concentration(outcome: &segproj::harness::ConcentrationOutcome) {
    println!("ell    exceed(0.02)  exceed(0.05)  exceed(0.10)  misclass%");
    for cell in &outcome.cells {
        println!(
            "{:<6} {:<13.4} {:<13.4} {:<13.4} {:.3}",
            cell.ell,
            cell.exceedance[0].1,
            cell.exceedance[1].1,
            cell.exceedance[2].1,
            cell.misclassification
        );
    }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let config = build_config(&args.common, 1)?;
    let train_path = config.input.clone().ok_or_else(|| Error::InvalidParameter {
        message: "a training CSV is required; pass --input".into(),
    })?;
    // Prediction needs the canonical binary labels, so parse both files
    // with the binary policy instead of inferring alphabets per file.
    let options = ParseOptions {
        has_header: config.has_header,
        labels: LabelPolicy::Binary,
    };
    let train = load_csv(train_path, &options)?;
    let test = load_csv(&args.test, &options)?;
    let report = run_predict(&train, &test, &config)?;
    println!("method  accuracy");
    for row in &report.rows {
        println!("{:<7} {:>6.2}", row.method, row.accuracy_mean);
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    let path = report_path(&config, "report.json")?;
    report.write(&path)?;
    print_written(&[path]);
    Ok(())
}

fn print_written(paths: &[PathBuf]) {
    let list: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    println!("wrote: {}", list.join(", "));
}
