//! End-to-end acceptance checks. Prints one PASS/FAIL/SKIP line per criterion
//! and exits nonzero if any criterion fails.
//!
//! Run with `cargo test -p ogeec --release --test acceptance`.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use ogeec::data::{generate_synthetic, parse_dataset, SparseDataset, SyntheticParams};
use ogeec::embedding::EmbeddingSpec;
use ogeec::ensemble::{sweep_ensemble_size, EnsembleSpec};
use ogeec::jl::{dataset_table, jl_epsilon, measure_distortion, r_sweep_table};
use ogeec::lsh::{compare, LshParams};
use ogeec::metrics::{
    evaluate, evaluate_ranked, ndcg_at_k, precision_at_k, psn_at_k, psp_at_k, Metric,
    PropensityModel,
};
use ogeec::par;
use ogeec::predictor::{predict, Learner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DATASET_SEEDS: [u64; 5] = [101, 202, 303, 404, 505];

type Check = fn() -> Option<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Option<Outcome> {
    Some(Outcome { pass, detail })
}

/// Clustered train/test instance shared by the trend criteria.
fn trend_data(seed: u64) -> (SparseDataset, SparseDataset) {
    generate_synthetic(&SyntheticParams {
        n: 2500,
        d: 20_000,
        num_labels: 200,
        sparsity: 20,
        labels_per_sample: 3,
        clusters: 40,
        seed,
    })
    .unwrap()
    .split_at(2000)
}

fn propensity(train: &SparseDataset) -> PropensityModel {
    PropensityModel::new(train.label_frequencies(), train.n(), 0.55, 1.5).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn bounds_tables() -> Option<Outcome> {
    let t = Instant::now();
    let expected_ii = [
        ("Delicious-200K", 0.1627, 0.8373, 1.1627),
        ("Amazon-670K", 0.1687, 0.8313, 1.1687),
        ("Amazon-3M", 0.1766, 0.8234, 1.1766),
    ];
    let expected_iii = [
        (50, 0.3254, 0.6746, 1.3254),
        (100, 0.2301, 0.7699, 1.2301),
        (150, 0.1879, 0.8121, 1.1879),
        (200, 0.1627, 0.8373, 1.1627),
        (250, 0.1455, 0.8545, 1.1455),
        (300, 0.1328, 0.8672, 1.1328),
        (350, 0.1230, 0.8770, 1.1230),
        (400, 0.1150, 0.8850, 1.1150),
    ];
    let four = |x: f64| format!("{x:.4}");
    let mut mismatches = 0;
    let ii = dataset_table(200);
    for ((name, b), (want_name, e, lo, hi)) in ii.iter().zip(expected_ii) {
        if *name != want_name || four(b.epsilon) != four(e) || four(b.lower) != four(lo) || four(b.upper) != four(hi) {
            mismatches += 1;
        }
    }
    let iii = r_sweep_table(196_606).unwrap();
    for (b, (r, e, lo, hi)) in iii.iter().zip(expected_iii) {
        if b.r != r || four(b.epsilon) != four(e) || four(b.lower) != four(lo) || four(b.upper) != four(hi) {
            mismatches += 1;
        }
    }
    let rows = ii.len() + iii.len();
    let elapsed = t.elapsed();
    outcome(
        mismatches == 0 && rows == 11 && elapsed < Duration::from_secs(1),
        format!("{} of {rows} rows match, {elapsed:.2?}", rows - mismatches),
    )
}

fn distortion() -> Option<Outcome> {
    let ds = common::synthetic(2000, 20_000, 100, 20, 2);
    let t = Instant::now();
    let report = par::with_workers(Some(1), || {
        measure_distortion(&ds, &EmbeddingSpec::new(0, ds.d(), 200).unwrap(), 10_000, 1).unwrap()
    });
    let elapsed = t.elapsed();
    let frac = report.fraction_within();
    let eps = jl_epsilon(2000, 200).unwrap().epsilon;
    outcome(
        frac >= 0.95 && report.pairs == 10_000 && elapsed < Duration::from_secs(60),
        format!("{:.2}% of {} pairs within eps={eps:.4}, {elapsed:.2?} on 1 worker", 100.0 * frac, report.pairs),
    )
}

fn naive_oracle() -> Option<Outcome> {
    let (train, test) = common::split(200, 100, 5000, 30, 8, 3);
    let spec = EmbeddingSpec::new(13, train.d(), 64).unwrap();
    let naive = common::NaiveModel::new(&spec, &train);
    let learner = Learner::fit(spec, &train).unwrap();
    let (mut labels, mut worst) = (0usize, 0.0f64);
    let mut agree = true;
    for i in 0..test.n() {
        let got = predict(&learner.spec, &learner.train, &train, train.num_labels(), test.features(i), 5)
            .unwrap()
            .ranked();
        let want = naive.predict(&test, i, 5);
        agree &= got.len() == want.len();
        for (g, w) in got.iter().zip(&want) {
            agree &= g.0 == w.0;
            worst = worst.max((g.1 - w.1).abs());
            labels += 1;
        }
    }
    outcome(
        agree && worst <= 1e-6,
        format!("{labels} scored labels over 100 queries, max |diff| = {worst:.2e}"),
    )
}

fn metrics_oracle() -> Option<Outcome> {
    let (pred, truth, model) = common::metrics_fixture();
    let report = evaluate_ranked(&pred, &truth, &model).unwrap();
    let worst = common::METRICS_REFERENCE
        .iter()
        .map(|&(m, k, want)| (report.get(m, k) - want).abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let labels = rng.random_range(2..40u32);
        let freq: Vec<u32> = (0..labels).map(|_| rng.random_range(0..500)).collect();
        let model = PropensityModel::new(&freq, 1000, 0.55, 1.5).unwrap();
        let mut pool: Vec<u32> = (0..labels).collect();
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.random_range(0..=i));
        }
        let predicted = pool[..rng.random_range(0..pool.len().min(6))].to_vec();
        let mut t: Vec<u32> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..labels)).collect();
        t.sort_unstable();
        t.dedup();
        if precision_at_k(&predicted, &t, 1) != ndcg_at_k(&predicted, &t, 1)
            || (psp_at_k(&predicted, &t, &model, 1) - psn_at_k(&predicted, &t, &model, 1)).abs() > 1e-12
        {
            violations += 1;
        }
    }
    outcome(
        worst <= 1e-9 && violations == 0,
        format!("12 fixture values, max |diff| = {worst:.1e}; {violations} identity violations in 1000 trials"),
    )
}

fn ensemble_trend() -> Option<Outcome> {
    let t = Instant::now();
    let mut p1 = vec![Vec::new(); 5];
    for seed in DATASET_SEEDS {
        let (train, test) = trend_data(seed);
        let spec = EnsembleSpec::consecutive(0, 5, train.d(), 200, 5).unwrap();
        let sweep = sweep_ensemble_size(&spec, &train, &test, &[1, 2, 3, 4, 5], &propensity(&train), &Default::default()).unwrap();
        for s in &sweep.sizes {
            p1[s.size - 1].push(s.report.get(Metric::Precision, 1));
        }
    }
    let stats: Vec<(f64, f64)> = p1.iter().map(|v| mean_se(v)).collect();
    let ok = stats.windows(2).all(|w| w[1].0 >= w[0].0 - w[1].1);
    let elapsed = t.elapsed();
    let trail: Vec<String> = stats.iter().map(|(m, se)| format!("{}±{}", pct(*m), pct(*se))).collect();
    outcome(
        ok && elapsed < Duration::from_secs(300),
        format!("P@1 for E=1..5: {}, {elapsed:.2?}", trail.join(" ")),
    )
}

fn dimension_trend() -> Option<Outcome> {
    let (mut low, mut high) = (Vec::new(), Vec::new());
    for seed in DATASET_SEEDS {
        let (train, test) = trend_data(seed);
        let model = propensity(&train);
        for (r, out) in [(50, &mut low), (200, &mut high)] {
            let learner = Learner::fit(EmbeddingSpec::new(0, train.d(), r).unwrap(), &train).unwrap();
            let (scores, _) = learner.predict_batch(&train, train.num_labels(), &test, &Default::default()).unwrap();
            out.push(evaluate(&scores, &test, &model).unwrap().get(Metric::Precision, 1));
        }
    }
    let ((m50, _), (m200, se200)) = (mean_se(&low), mean_se(&high));
    outcome(
        m200 + se200 > m50,
        format!("P@1 r=50: {}, r=200: {}±{}", pct(m50), pct(m200), pct(se200)),
    )
}

fn determinism() -> Option<Outcome> {
    let dir = tempfile::TempDir::new().unwrap();
    let (train, test) = trend_data(DATASET_SEEDS[0]);
    train.save(dir.path().join("train.txt")).unwrap();
    test.save(dir.path().join("test.txt")).unwrap();
    let wide = par::max_workers().max(4).to_string();
    let run = |workers: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_ogeec"))
            .args(["--workers", workers, "predict", "--train", "train.txt", "--test", "test.txt", "--r", "64", "-e", "3"])
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run("1");
    let b = run("1");
    let c = run(&wide);
    outcome(
        !a.is_empty() && a == b && a == c,
        format!("{} bytes, 2 runs at 1 worker and 1 run at {wide} workers", a.len()),
    )
}

fn lsh_direction() -> Option<Outcome> {
    let (mut exact, mut approx) = (Vec::new(), Vec::new());
    for seed in DATASET_SEEDS {
        let (train, test) = trend_data(seed);
        let spec = EnsembleSpec::consecutive(0, 5, train.d(), 200, 5).unwrap();
        let cmp = compare(&spec, &train, &test, LshParams::default(), &propensity(&train)).unwrap();
        exact.push(cmp.exhaustive.get(Metric::Precision, 1));
        approx.push(cmp.lsh.get(Metric::Precision, 1));
    }
    let ((me, _), (ml, _)) = (mean_se(&exact), mean_se(&approx));
    outcome(me >= ml, format!("P@1 exhaustive: {}, LSH (T=10, H=16): {}", pct(me), pct(ml)))
}

/// Published one-learner and five-learner P@1 and PSP@1, in percent.
fn published(name: &str) -> Option<[(f64, f64); 2]> {
    match name {
        "Delicious-200K" => Some([(36.89, 5.83), (40.54, 6.37)]),
        "Amazon-670K" => Some([(35.21, 21.84), (37.45, 23.05)]),
        "Amazon-3M" => Some([(36.31, 12.06), (40.57, 12.87)]),
        _ => None,
    }
}

fn full_dataset() -> Option<Outcome> {
    let train_path = std::env::var_os("OGEEC_FULL_TRAIN")?;
    let test_path = std::env::var_os("OGEEC_FULL_TEST")?;
    let name = std::env::var("OGEEC_FULL_DATASET").unwrap_or_else(|_| "Delicious-200K".into());
    let Some([(p1_one, psp_one), (p1_five, psp_five)]) = published(&name) else {
        return outcome(false, format!("unknown dataset {name}"));
    };
    let train = parse_dataset(train_path).unwrap();
    let test = parse_dataset(test_path).unwrap();
    let spec = EnsembleSpec::consecutive(0, 5, train.d(), 200, 5).unwrap();
    let sweep = sweep_ensemble_size(&spec, &train, &test, &[5], &propensity(&train), &Default::default()).unwrap();
    let (one, _) = sweep.single_mean_std();
    let five = &sweep.sizes[0].report;
    let got = |r: &ogeec::EvalReport, m| 100.0 * r.get(m, 1);
    let ok = (got(&one, Metric::Precision) - p1_one).abs() <= 1.0
        && (got(five, Metric::Precision) - p1_five).abs() <= 1.0
        && (got(&one, Metric::PsPrecision) - psp_one).abs() <= 0.5
        && (got(five, Metric::PsPrecision) - psp_five).abs() <= 0.5;
    outcome(
        ok,
        format!(
            "{name}: P@1 {:.2}/{:.2}, PSP@1 {:.2}/{:.2} (one/five learners)",
            got(&one, Metric::Precision),
            got(five, Metric::Precision),
            got(&one, Metric::PsPrecision),
            got(five, Metric::PsPrecision)
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("bound tables", bounds_tables),
        ("distortion within bounds", distortion),
        ("naive oracle equivalence", naive_oracle),
        ("metrics oracle", metrics_oracle),
        ("ensemble size trend", ensemble_trend),
        ("embedding dimension trend", dimension_trend),
        ("deterministic predictions", determinism),
        ("exhaustive vs LSH", lsh_direction),
        ("full dataset accuracy", full_dataset),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Some(o) => {
                failed += usize::from(!o.pass);
                println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
            }
            None => println!("SKIP {}. {name}: set OGEEC_FULL_TRAIN and OGEEC_FULL_TEST to run", i + 1),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
