//! Acceptance gate: the end-to-end guarantees this library commits to,
//! one test per criterion, each printing a single PASS/FAIL line with the
//! measured numbers. Tolerances are part of the contract and are asserted
//! exactly as stated; seeds are frozen so every run measures the same
//! thing.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use segproj::classify::binary_entropy;
use segproj::cluster::{estimate_k, DensityConfig};
use segproj::error::Result;
use segproj::factorize::{als_factorize, AlsConfig};
use segproj::harness::{
    run_concentration, run_concentration_cat, run_predict, run_table1, split_holdout,
    ExperimentConfig, Report, ReportRow,
};
use segproj::lcem::{em_fit, EmConfig};
use segproj::pooled::BernoulliPooled;
use segproj::projection::{pscore_degree, pscore_entropy, ScoreMatrix};
use segproj::stream::stream;
use segproj::synthgen::{
    gen_lc_ind, gen_lc_ind_regular, sample_table1_model, SynthSpecCat, SynthSpecInd,
};

fn check(name: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    println!("{name}: {status} - {detail}");
    assert!(ok, "{name}: {detail}");
}

fn config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    }
}

fn row<'r>(report: &'r Report, method: &str) -> &'r ReportRow {
    report
        .rows
        .iter()
        .find(|r| r.method == method)
        .expect("method row present")
}

/// Benchmark-grid cells at the published operating points: accuracy of
/// both methods on the easy complete-data cell, and the projection
/// advantage on the two hard sparse cells.
#[test]
fn criterion_01_benchmark_grid_spot_values() {
    let easy = run_table1(&[5], &[0.0], 30, &config(101)).unwrap();
    let proj_easy = row(&easy, "proj").accuracy_mean;
    let lc_easy = row(&easy, "lc").accuracy_mean;

    let hard9 = run_table1(&[9], &[0.6], 30, &config(102)).unwrap();
    let proj9 = row(&hard9, "proj").accuracy_mean;
    let lc9 = row(&hard9, "lc").accuracy_mean;

    let hard7 = run_table1(&[7], &[0.8], 30, &config(103)).unwrap();
    let proj7 = row(&hard7, "proj").accuracy_mean;
    let lc7 = row(&hard7, "lc").accuracy_mean;

    let subchecks = [
        (
            (proj_easy - 98.7).abs() <= 2.0,
            format!("k=5 s=0 proj {proj_easy:.1} (98.7 +/- 2)"),
        ),
        (
            (lc_easy - 99.0).abs() <= 2.0,
            format!("lc {lc_easy:.1} (99.0 +/- 2)"),
        ),
        (
            (proj9 - 61.5).abs() <= 5.0,
            format!("k=9 s=0.6 proj {proj9:.1} (61.5 +/- 5)"),
        ),
        (
            (lc9 - 47.9).abs() <= 6.0,
            format!("lc {lc9:.1} (47.9 +/- 6)"),
        ),
        (proj9 > lc9, format!("proj {proj9:.1} > lc {lc9:.1}")),
        (
            (proj7 - 61.4).abs() <= 5.0,
            format!("k=7 s=0.8 proj {proj7:.1} (61.4 +/- 5)"),
        ),
        (proj7 > lc7, format!("proj {proj7:.1} > lc {lc7:.1}")),
    ];
    let detail = subchecks
        .iter()
        .map(|(ok, text)| {
            if *ok {
                text.clone()
            } else {
                format!("{text} OUT OF BAND")
            }
        })
        .collect::<Vec<_>>()
        .join("; ");
    let ok = subchecks.iter().all(|(ok, _)| *ok);
    check("criterion 1", ok, &format!("grid spot values: {detail}"));
}

/// The projection pipeline must be at least three times faster than EM on
/// the k=9, sparsity 0.4 cell.
#[test]
fn criterion_02_projection_is_faster_than_em() {
    let report = run_table1(&[9], &[0.4], 30, &config(104)).unwrap();
    let proj = row(&report, "proj").seconds_mean;
    let lc = row(&report, "lc").seconds_mean;
    check(
        "criterion 2",
        proj <= lc / 3.0,
        &format!(
            "timing: proj {proj:.4}s vs lc {lc:.4}s per replication ({:.1}x)",
            lc / proj
        ),
    );
}

/// Scores concentrate on the theoretical centers: the exceedance fraction
/// at relative tolerance 0.05 falls below 1% by degree 5000 and never
/// grows along {50, 500, 5000}.
#[test]
fn criterion_03_score_concentration() {
    let spec = SynthSpecInd {
        m: 1000,
        n: 5000,
        k: 2,
        q: vec![0.6, 0.4],
        alpha: vec![0.2, 0.8],
        p: 1.0,
        seed: 0,
    };
    let (outcome, _) = run_concentration(&spec, &[50, 500, 5000], 10, &config(105)).unwrap();
    // exceedance[1] is the 0.05 tolerance.
    let e50 = outcome.cells[0].exceedance[1].1;
    let e500 = outcome.cells[1].exceedance[1].1;
    let e5000 = outcome.cells[2].exceedance[1].1;
    let ok = e5000 < 0.01 && e50 >= e500 && e500 >= e5000;
    check(
        "criterion 3",
        ok,
        &format!(
            "exceedance fraction at 0.05: ell=50 {e50:.4}, ell=500 {e500:.4}, ell=5000 \
             {e5000:.4} (needs < 0.01 at 5000, non-increasing)"
        ),
    );
}

/// Negative controls: a balanced pool or identical segment parameters
/// leave nearest-center classification at chance.
#[test]
fn criterion_04_degenerate_populations_stay_at_chance() {
    let balanced_pool = SynthSpecInd {
        m: 1000,
        n: 1000,
        k: 2,
        q: vec![0.5, 0.5],
        alpha: vec![0.1, 0.9],
        p: 1.0,
        seed: 0,
    };
    let (a, _) = run_concentration(&balanced_pool, &[1000], 30, &config(106)).unwrap();
    let acc_a = a.cells[0].accuracy;

    let equal_params = SynthSpecInd {
        alpha: vec![0.6, 0.6],
        ..balanced_pool.clone()
    };
    let (b, _) = run_concentration(&equal_params, &[1000], 30, &config(107)).unwrap();
    let acc_b = b.cells[0].accuracy;

    let ok = a.degenerate
        && (45.0..=55.0).contains(&acc_a)
        && b.constants.is_none()
        && (45.0..=55.0).contains(&acc_b);
    check(
        "criterion 4",
        ok,
        &format!(
            "negative controls at ell=1000: balanced pool accuracy {acc_a:.1}%, equal \
             parameters accuracy {acc_b:.1}% (both must sit in [45, 55])"
        ),
    );
}

/// Nearest-center misclassification vanishes with degree: below 1% at
/// ell=1250 and non-increasing over {10, 50, 250, 1250}, 30-seed means.
#[test]
fn criterion_05_misclassification_vanishes_with_degree() {
    let spec = SynthSpecInd {
        m: 1000,
        n: 1250,
        k: 2,
        q: vec![0.6, 0.4],
        alpha: vec![0.2, 0.8],
        p: 1.0,
        seed: 0,
    };
    let (outcome, _) = run_concentration(&spec, &[10, 50, 250, 1250], 30, &config(108)).unwrap();
    let mis: Vec<f64> = outcome.cells.iter().map(|c| c.misclassification).collect();
    let ok = mis[3] < 1.0 && mis[0] >= mis[1] && mis[1] >= mis[2] && mis[2] >= mis[3];
    check(
        "criterion 5",
        ok,
        &format!(
            "misclassification by degree: ell=10 {:.3}%, ell=50 {:.3}%, ell=250 {:.3}%, \
             ell=1250 {:.3}% (needs < 1% at 1250, non-increasing)",
            mis[0], mis[1], mis[2], mis[3]
        ),
    );
}

/// Two categories where only the first separates the segments and the
/// second is balanced: the full classifier is near-perfect, while
/// restricting to the balanced category collapses to chance.
#[test]
fn criterion_06_category_restriction() {
    let spec = SynthSpecCat {
        m: 1000,
        n_b: vec![1000, 1000],
        k: 2,
        q: vec![0.5, 0.5],
        alpha: vec![vec![0.2, 0.5], vec![0.7, 0.5]],
        ell_b: vec![1000, 1000],
        seed: 0,
    };
    let (full, _) = run_concentration_cat(&spec, None, 10, &config(109)).unwrap();
    let (restricted, _) = run_concentration_cat(&spec, Some(&[1]), 10, &config(110)).unwrap();
    let ok = full.misclassification < 1.0 && (45.0..=55.0).contains(&restricted.accuracy);
    check(
        "criterion 6",
        ok,
        &format!(
            "category study: full misclassification {:.3}% (needs < 1%), informative \
             category dropped -> accuracy {:.1}% (chance band [45, 55])",
            full.misclassification, restricted.accuracy
        ),
    );
}

/// The EM objective never decreases: across 30 seeded fits on grid
/// instances, every recorded log-posterior step is non-decreasing up to
/// 1e-10 slack.
#[test]
fn criterion_07_em_objective_is_monotone() {
    let ks = [5usize, 7, 9];
    let sparsities = [0.0, 0.2, 0.4, 0.6, 0.8];
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    let mut runs = 0usize;
    for run in 0..30u64 {
        let k = ks[(run % 3) as usize];
        let sparsity = sparsities[(run % 5) as usize];
        let spec = sample_table1_model(k, sparsity, 500 + run).unwrap();
        let truth = gen_lc_ind(&spec).unwrap();
        let em = EmConfig {
            restarts: 3,
            seed: 900 + run,
            ..EmConfig::default()
        };
        let model = em_fit(truth.graph(), k, &em).unwrap();
        for w in model.log_posterior_trace().windows(2) {
            let drop = w[0] - w[1];
            if drop > 1e-10 {
                violations += 1;
                worst = worst.max(drop);
            }
        }
        runs += 1;
    }
    check(
        "criterion 7",
        violations == 0,
        &format!(
            "EM log-posterior monotonicity: {violations} violations beyond 1e-10 across \
             {runs} fits (worst drop {worst:.3e})"
        ),
    );
}

/// On complete matrices the masked factorization reaches the truncated
/// SVD optimum and its objective trace never increases.
#[test]
fn criterion_08_factorization_matches_svd() {
    let mut rng = stream(405, "svd-oracle");
    let mut worst_gap = 0.0f64;
    let mut trace_ok = true;
    for trial in 0..50u64 {
        let m = rng.gen_range(20..=200);
        let n = rng.gen_range(8..=20);
        let rank = rng.gen_range(1..=5usize);
        let values: Vec<f64> = (0..m * n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let scores = ScoreMatrix::from_parts(m, n, values.clone(), vec![true; m * n]).unwrap();
        let als = AlsConfig {
            tol: 1e-13,
            max_iters: 5000,
            seed: trial,
            ..AlsConfig::default()
        };
        let pair = als_factorize(&scores, rank, &als).unwrap();
        let reached = pair.masked_sq_error(&scores).unwrap();
        let svd = DMatrix::from_row_slice(m, n, &values)
            .svd(false, false)
            .singular_values;
        let optimum: f64 = svd.iter().skip(rank).map(|s| s * s).sum();
        worst_gap = worst_gap.max((reached - optimum).abs() / optimum);
        for w in pair.objective_trace().windows(2) {
            if w[1] > w[0] * (1.0 + 1e-12) + 1e-12 {
                trace_ok = false;
            }
        }
    }
    check(
        "criterion 8",
        worst_gap <= 1e-6 && trace_ok,
        &format!(
            "factorization vs truncated SVD on 50 random complete matrices: worst relative \
             gap {worst_gap:.2e} (limit 1e-6), trace monotone: {trace_ok}"
        ),
    );
}

/// Entropy normalization is the degree normalization divided by the
/// pooled entropy, exactly, for binary single-category data.
#[test]
fn criterion_09_normalization_identity() -> Result<()> {
    let spec = SynthSpecInd {
        m: 1000,
        n: 200,
        k: 2,
        q: vec![0.5, 0.5],
        alpha: vec![0.25, 0.7],
        p: 0.5,
        seed: 7,
    };
    let truth = gen_lc_ind(&spec)?;
    let graph = truth.graph();
    let pooled = BernoulliPooled::fit(graph)?;
    let h = binary_entropy(pooled.alpha_pool())?;
    let by_degree = pscore_degree(graph, &pooled)?;
    let by_entropy = pscore_entropy(graph, &pooled)?;
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for i in 0..graph.n_customers() {
        if let (Some(d), Some(e)) = (by_degree.get(i), by_entropy.get(i)) {
            worst = worst.max((e - d / h).abs() / e.abs().max(1.0));
            compared += 1;
        }
    }
    check(
        "criterion 9",
        compared >= 990 && worst <= 1e-12,
        &format!(
            "normalization identity on {compared} scored customers: worst relative \
             difference {worst:.2e} (limit 1e-12)"
        ),
    );
    Ok(())
}

/// Density-based segment-count estimation finds k=3 on the designed
/// three-segment population in at least 27 of 30 seeds.
#[test]
fn criterion_10_segment_count_estimation() {
    let mut hits = 0usize;
    for seed in 0..30u64 {
        let spec = SynthSpecInd {
            m: 2000,
            n: 500,
            k: 3,
            q: vec![0.5, 0.3, 0.2],
            alpha: vec![0.1, 0.5, 0.9],
            p: 1.0,
            seed: 1300 + seed,
        };
        let truth = gen_lc_ind_regular(&spec, 500).unwrap();
        let pooled = BernoulliPooled::fit(truth.graph()).unwrap();
        let scores = pscore_entropy(truth.graph(), &pooled).unwrap();
        let k = estimate_k(&scores.present_values(), &DensityConfig::default()).unwrap();
        if k == 3 {
            hits += 1;
        }
    }
    check(
        "criterion 10",
        hits >= 27,
        &format!("segment-count estimation: k=3 found in {hits} of 30 seeds (needs >= 27)"),
    );
}

/// Segment-aware prediction beats the population baseline by at least ten
/// accuracy points on the two-segment holdout, 30-seed means.
#[test]
fn criterion_11_prediction_margin() {
    let mut pop_sum = 0.0;
    let mut proj_sum = 0.0;
    let mut lc_sum = 0.0;
    let seeds = 30u64;
    for seed in 0..seeds {
        let spec = SynthSpecInd {
            m: 300,
            n: 200,
            k: 2,
            q: vec![0.6, 0.4],
            alpha: vec![0.2, 0.8],
            p: 1.0,
            seed: 1700 + seed,
        };
        let truth = gen_lc_ind_regular(&spec, 60).unwrap();
        let (train, test) = split_holdout(truth.graph(), 0.25, 2300 + seed).unwrap();
        let cfg = ExperimentConfig {
            k: Some(2),
            seed: 2900 + seed,
            ..ExperimentConfig::default()
        };
        let report = run_predict(&train, &test, &cfg).unwrap();
        pop_sum += row(&report, "pop").accuracy_mean;
        proj_sum += row(&report, "proj").accuracy_mean;
        lc_sum += row(&report, "lc").accuracy_mean;
    }
    let pop = pop_sum / seeds as f64;
    let proj = proj_sum / seeds as f64;
    let lc = lc_sum / seeds as f64;
    let ok = proj >= pop + 10.0 && lc >= pop + 10.0;
    check(
        "criterion 11",
        ok,
        &format!(
            "holdout prediction (30-seed means): population {pop:.1}%, projection {proj:.1}%, \
             latent-class {lc:.1}% (segment-aware rules need a >= 10 point margin)"
        ),
    );
}
