use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ogeec::config::{PartialConfig, RunConfig};
use ogeec::data::{generate_synthetic, SparseDataset, SyntheticParams};
use ogeec::embedding::{EmbeddedMatrix, EmbeddingSpec};
use ogeec::ensemble::{
    predict_ensemble_batch_with, sweep_ensemble_size, EnsembleSpec, MemoryMode, ModelMetadata,
};
use ogeec::jl;
use ogeec::lsh::{self, LshParams};
use ogeec::metrics::{evaluate, EvalReport, Metric, PropensityModel, CUTOFFS};
use ogeec::par;
use ogeec::predictor::{write_predictions, Learner, PredictOptions, PredictTimings};

/// Random-projection kNN classifier for extreme multi-label data.
///
/// Datasets use the Extreme Classification Repository text format with
/// 0-based feature and label indices: a header line "n d L", then one line
/// per sample "l1,l2,... f1:v1 f2:v2 ...".
#[derive(Parser, Debug)]
#[command(name = "ogeec", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a clustered synthetic dataset.
    Gen(GenArgs),
    /// Write model metadata (seeds and shapes) and optionally cache embeddings.
    Train(TrainArgs),
    /// Predict the top labels of every test sample as TSV.
    Predict(PredictArgs),
    /// Predict and score with P@K, nDCG@K, PSP@K, PSN@K.
    Eval(EvalArgs),
    /// Bound tables, distortion measurement and parameter sweeps.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Args, Debug, Default, Clone)]
struct ModelFlags {
    /// Embedding dimensionality [default: 200]
    #[arg(long)]
    r: Option<usize>,
    /// Nearest neighbours [default: 5]
    #[arg(long)]
    k: Option<usize>,
    /// Number of learners [default: 5]
    #[arg(long = "ensemble-size", short = 'e')]
    ensemble_size: Option<usize>,
    /// Base seed; learners use base, base+1, ... [default: 0]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default, Clone)]
struct PropensityFlags {
    /// Propensity sigmoid A [default: 0.55]
    #[arg(long = "prop-a")]
    a: Option<f64>,
    /// Propensity sigmoid B [default: 1.5]
    #[arg(long = "prop-b")]
    b: Option<f64>,
}

#[derive(Args, Debug)]
struct DataFlags {
    /// Training set.
    #[arg(long)]
    train: PathBuf,
    /// Test set.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Label vocabulary size.
    #[arg(long)]
    labels: usize,
    /// Mean nonzeros per sample.
    #[arg(long, default_value_t = 20)]
    sparsity: usize,
    /// Mean labels per sample.
    #[arg(long, default_value_t = 3)]
    labels_per_sample: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (training part when --test-n is given).
    #[arg(long)]
    out: PathBuf,
    /// Extra samples drawn from the same clusters and written to --test-out.
    #[arg(long, requires = "test_out")]
    test_n: Option<usize>,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    /// Metadata output file.
    #[arg(long)]
    model: PathBuf,
    /// Also write each learner's embedded training matrix here.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    model_flags: ModelFlags,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    data: DataFlags,
    /// Model metadata from `train`; overrides the model flags.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Read embedded training matrices from here when present.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Predictions file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Labels written per sample [default: 5]
    #[arg(long)]
    top: Option<usize>,
    /// Keep every learner's training embedding in memory at once.
    #[arg(long)]
    hold_all: bool,
    /// Skip training sample i when predicting test sample i (test == train).
    #[arg(long)]
    exclude_self: bool,
    #[command(flatten)]
    model_flags: ModelFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataFlags,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Also write the report as TSV.
    #[arg(long)]
    tsv: Option<PathBuf>,
    #[arg(long)]
    hold_all: bool,
    #[arg(long)]
    exclude_self: bool,
    #[command(flatten)]
    model_flags: ModelFlags,
    #[command(flatten)]
    prop: PropensityFlags,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCommand {
    /// Distortion bounds eps = sqrt(log10(n)/r).
    Bounds {
        /// Sample counts (default: the three benchmark datasets).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Output dimensions (default: 200 for the dataset table, 50..400 for the sweep).
        #[arg(long, value_delimiter = ',')]
        r: Vec<usize>,
    },
    /// Empirical pairwise-distance distortion; histogram TSV on stdout.
    Distortion {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[command(flatten)]
        model_flags: ModelFlags,
    },
    /// Metrics as a function of the embedding dimensionality.
    SweepR {
        #[command(flatten)]
        data: DataFlags,
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250,300,350,400")]
        r_list: Vec<usize>,
        #[command(flatten)]
        model_flags: ModelFlags,
        #[command(flatten)]
        prop: PropensityFlags,
    },
    /// Metrics as a function of the number of fused learners.
    SweepEnsemble {
        #[command(flatten)]
        data: DataFlags,
        /// Sizes to evaluate (default: 1..=ensemble size).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[command(flatten)]
        model_flags: ModelFlags,
        #[command(flatten)]
        prop: PropensityFlags,
    },
    /// Exhaustive search against an LSH baseline on the same embeddings.
    LshCompare {
        #[command(flatten)]
        data: DataFlags,
        /// Hash tables [default: 10]
        #[arg(long)]
        tables: Option<usize>,
        /// Bits per table [default: 16]
        #[arg(long)]
        bits: Option<usize>,
        #[command(flatten)]
        model_flags: ModelFlags,
        #[command(flatten)]
        prop: PropensityFlags,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => PartialConfig::load(p)?,
        None => PartialConfig::default(),
    };
    let global = PartialConfig {
        workers: cli.workers,
        ..Default::default()
    };
    let base = global.or(file);
    let workers = base.clone().resolve()?.workers;
    par::with_workers(workers, move || dispatch(cli.command, base))
}

fn overlay(m: &ModelFlags, p: Option<&PropensityFlags>, base: &PartialConfig) -> PartialConfig {
    PartialConfig {
        r: m.r,
        k: m.k,
        ensemble_size: m.ensemble_size,
        seed: m.seed,
        propensity_a: p.and_then(|p| p.a),
        propensity_b: p.and_then(|p| p.b),
        ..Default::default()
    }
    .or(base.clone())
}

fn load(path: &Path) -> Result<SparseDataset> {
    SparseDataset::load(path).with_context(|| format!("loading {}", path.display()))
}

fn ensemble_spec(cfg: &RunConfig, d: usize) -> Result<EnsembleSpec> {
    Ok(EnsembleSpec::consecutive(
        cfg.base_seed,
        cfg.ensemble_size,
        d,
        cfg.r,
        cfg.k,
    )?)
}

fn propensity(cfg: &RunConfig, train: &SparseDataset) -> Result<PropensityModel> {
    Ok(PropensityModel::new(
        train.label_frequencies(),
        train.n(),
        cfg.propensity_a,
        cfg.propensity_b,
    )?)
}

fn check_same_space(train: &SparseDataset, test: &SparseDataset) -> Result<()> {
    if train.d() != test.d() {
        bail!("test set has d={} but training set has d={}", test.d(), train.d());
    }
    if test.num_labels() > train.num_labels() {
        bail!(
            "test set declares L={} but training set has L={}",
            test.num_labels(),
            train.num_labels()
        );
    }
    Ok(())
}

fn cache_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("learner-{seed}.ogec"))
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn report_timings(t: &PredictTimings) {
    eprintln!(
        "timing: matrix generation {:.3}s, embedding {:.3}s, search {:.3}s, propagation {:.3}s",
        secs(t.matrix_generation),
        secs(t.embedding),
        secs(t.search),
        secs(t.propagation)
    );
}

fn dispatch(command: Command, base: PartialConfig) -> Result<()> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a, &base),
        Command::Predict(a) => cmd_predict(a, &base),
        Command::Eval(a) => cmd_eval(a, &base),
        Command::Analyze(a) => cmd_analyze(a, &base),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let extra = a.test_n.unwrap_or(0);
    let ds = generate_synthetic(&SyntheticParams {
        n: a.n + extra,
        d: a.d,
        num_labels: a.labels,
        sparsity: a.sparsity,
        labels_per_sample: a.labels_per_sample,
        clusters: a.clusters,
        seed: a.seed,
    })?;
    let (train, test) = ds.split_at(a.n);
    train.save(&a.out)?;
    if let Some(p) = a.test_out {
        test.save(p)?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, base: &PartialConfig) -> Result<()> {
    let cfg = overlay(&a.model_flags, None, base).resolve()?;
    let train = load(&a.train)?;
    let spec = ensemble_spec(&cfg, train.d())?;
    if let Some(dir) = &a.cache_dir {
        fs::create_dir_all(dir)?;
    }
    for &seed in &spec.seeds {
        let t = Instant::now();
        let learner = Learner::fit(spec.embedding(seed), &train)?;
        let total = t.elapsed();
        eprintln!(
            "learner seed={seed}: matrix generation {:.3}s, embedding {:.3}s ({} parameters, 0 learned)",
            secs(learner.fit_timings.generation),
            secs(total.saturating_sub(learner.fit_timings.generation)),
            learner.spec.parameter_count()
        );
        if let Some(dir) = &a.cache_dir {
            learner
                .train
                .save_cache(cache_path(dir, seed), &learner.spec)?;
        }
    }
    fs::write(&a.model, ModelMetadata::new(cfg.base_seed, &spec).to_toml())?;
    Ok(())
}

struct Prediction {
    scores: Vec<ogeec::ScoreVector>,
    timings: PredictTimings,
}

fn run_prediction(
    cfg: &RunConfig,
    model: Option<&Path>,
    cache_dir: Option<&Path>,
    train: &SparseDataset,
    test: &SparseDataset,
    hold_all: bool,
    exclude_self: bool,
) -> Result<Prediction> {
    check_same_space(train, test)?;
    let spec = match model {
        Some(p) => {
            let meta = ModelMetadata::from_toml(&fs::read_to_string(p)?)?;
            let spec = meta.to_spec()?;
            if spec.d != train.d() {
                bail!("model was built for d={}, data has d={}", spec.d, train.d());
            }
            spec
        }
        None => ensemble_spec(cfg, train.d())?,
    };
    let opts = PredictOptions {
        k: spec.k,
        exclude_self,
        ..Default::default()
    };
    let mode = if hold_all {
        MemoryMode::HoldAll
    } else {
        MemoryMode::Reembed
    };
    let make = |e: EmbeddingSpec| -> ogeec::Result<Learner> {
        if let Some(dir) = cache_dir {
            let path = cache_path(dir, e.seed);
            if path.exists() {
                let m = EmbeddedMatrix::load_cache(&path, &e)?;
                if m.n() != train.n() {
                    return Err(ogeec::Error::Cache(format!(
                        "{} holds {} samples, training set has {}",
                        path.display(),
                        m.n(),
                        train.n()
                    )));
                }
                return Ok(Learner::from_embedded(e, m));
            }
        }
        Learner::fit(e, train)
    };
    let (scores, timings) = predict_ensemble_batch_with(&spec, train, test, &opts, mode, make)?;
    Ok(Prediction { scores, timings })
}

fn cmd_predict(a: PredictArgs, base: &PartialConfig) -> Result<()> {
    let mut cfg = overlay(&a.model_flags, None, base).resolve()?;
    if let Some(top) = a.top {
        cfg.top = top;
    }
    let train = load(&a.data.train)?;
    let test = load(&a.data.test)?;
    let p = run_prediction(
        &cfg,
        a.model.as_deref(),
        a.cache_dir.as_deref(),
        &train,
        &test,
        a.hold_all,
        a.exclude_self,
    )?;
    report_timings(&p.timings);
    match a.out {
        Some(path) => write_predictions(fs::File::create(path)?, &p.scores, cfg.top)?,
        None => write_predictions(io::stdout().lock(), &p.scores, cfg.top)?,
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, base: &PartialConfig) -> Result<()> {
    let cfg = overlay(&a.model_flags, Some(&a.prop), base).resolve()?;
    let train = load(&a.data.train)?;
    let test = load(&a.data.test)?;
    let p = run_prediction(
        &cfg,
        a.model.as_deref(),
        a.cache_dir.as_deref(),
        &train,
        &test,
        a.hold_all,
        a.exclude_self,
    )?;
    report_timings(&p.timings);
    let mut report = evaluate(&p.scores, &test, &propensity(&cfg, &train)?)?;
    report.timings = Some(p.timings);
    println!("{report}");
    if let Some(path) = a.tsv {
        fs::write(path, report.to_tsv())?;
    }
    Ok(())
}

fn metric_header() -> String {
    let mut cols = Vec::new();
    for m in Metric::ALL {
        for k in CUTOFFS {
            cols.push(format!("{}@{}", m.name(), k));
        }
    }
    cols.join("\t")
}

fn metric_row(r: &EvalReport) -> String {
    let mut cols = Vec::new();
    for m in Metric::ALL {
        for k in CUTOFFS {
            cols.push(format!("{:.4}", 100.0 * r.get(m, k)));
        }
    }
    cols.join("\t")
}

fn cmd_analyze(a: AnalyzeCommand, base: &PartialConfig) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match a {
        AnalyzeCommand::Bounds { n, r } => {
            if n.is_empty() {
                let rs = if r.is_empty() { vec![200] } else { r.clone() };
                for r in rs {
                    writeln!(out, "# r={r}\ndataset\tn\tepsilon\t1-epsilon\t1+epsilon")?;
                    for (name, b) in jl::dataset_table(r) {
                        writeln!(out, "{name}\t{}\t{b}", b.n)?;
                    }
                }
                let (name, delicious) = jl::BENCHMARK_DATASETS[0];
                writeln!(out, "# {name} (n={delicious})\nr\tepsilon\t1-epsilon\t1+epsilon")?;
                for b in jl::r_sweep_table(delicious)? {
                    writeln!(out, "{}\t{b}", b.r)?;
                }
            } else {
                let rs = if r.is_empty() { vec![200] } else { r };
                writeln!(out, "n\tr\tepsilon\t1-epsilon\t1+epsilon")?;
                for &n in &n {
                    for &r in &rs {
                        writeln!(out, "{n}\t{r}\t{}", jl::jl_epsilon(n, r)?)?;
                    }
                }
            }
        }
        AnalyzeCommand::Distortion {
            data,
            pairs,
            bins,
            model_flags,
        } => {
            let cfg = overlay(&model_flags, None, base).resolve()?;
            let ds = load(&data)?;
            let spec = EmbeddingSpec::new(cfg.base_seed, ds.d(), cfg.r)?;
            let rep = jl::measure_distortion_with(
                &ds,
                &ogeec::embedding::GaussianProjection::new(spec),
                pairs,
                cfg.base_seed,
                jl::HistogramSpec {
                    bins,
                    ..Default::default()
                },
            )?;
            eprintln!(
                "pairs {} (skipped zero-distance {}), within [{:.4}, {:.4}]: {:.4}; ratio min {:.4} median {:.4} max {:.4}",
                rep.pairs,
                rep.skipped_zero,
                rep.bound.lower,
                rep.bound.upper,
                rep.fraction_within(),
                rep.min,
                rep.median,
                rep.max
            );
            write!(out, "{}", rep.histogram_tsv())?;
        }
        AnalyzeCommand::SweepR {
            data,
            r_list,
            model_flags,
            prop,
        } => {
            let cfg = overlay(&model_flags, Some(&prop), base).resolve()?;
            let train = load(&data.train)?;
            let test = load(&data.test)?;
            check_same_space(&train, &test)?;
            let model = propensity(&cfg, &train)?;
            writeln!(out, "r\tlearners\t{}", metric_header())?;
            for r in r_list {
                let spec = ensemble_spec(&RunConfig { r, ..cfg.clone() }, train.d())?;
                let sweep = sweep_ensemble_size(
                    &spec,
                    &train,
                    &test,
                    &[spec.len()],
                    &model,
                    &PredictOptions::default(),
                )?;
                let (mean, _) = sweep.single_mean_std();
                writeln!(out, "{r}\t1(mean)\t{}", metric_row(&mean))?;
                writeln!(out, "{r}\t{}\t{}", spec.len(), metric_row(&sweep.sizes[0].report))?;
            }
        }
        AnalyzeCommand::SweepEnsemble {
            data,
            sizes,
            model_flags,
            prop,
        } => {
            let cfg = overlay(&model_flags, Some(&prop), base).resolve()?;
            let train = load(&data.train)?;
            let test = load(&data.test)?;
            check_same_space(&train, &test)?;
            let spec = ensemble_spec(&cfg, train.d())?;
            let sizes = if sizes.is_empty() {
                (1..=spec.len()).collect()
            } else {
                sizes
            };
            let sweep = sweep_ensemble_size(
                &spec,
                &train,
                &test,
                &sizes,
                &propensity(&cfg, &train)?,
                &PredictOptions::default(),
            )?;
            writeln!(out, "learners\t{}", metric_header())?;
            for s in &sweep.sizes {
                writeln!(out, "{}\t{}", s.size, metric_row(&s.report))?;
            }
            let (mean, std) = sweep.single_mean_std();
            writeln!(out, "single-mean\t{}", metric_row(&mean))?;
            writeln!(out, "single-std\t{}", metric_row(&std))?;
        }
        AnalyzeCommand::LshCompare {
            data,
            tables,
            bits,
            model_flags,
            prop,
        } => {
            let mut cfg = overlay(&model_flags, Some(&prop), base).resolve()?;
            cfg.lsh_tables = tables.unwrap_or(cfg.lsh_tables);
            cfg.lsh_bits = bits.unwrap_or(cfg.lsh_bits);
            let train = load(&data.train)?;
            let test = load(&data.test)?;
            check_same_space(&train, &test)?;
            let spec = ensemble_spec(&cfg, train.d())?;
            let cmp = lsh::compare(
                &spec,
                &train,
                &test,
                LshParams {
                    tables: cfg.lsh_tables,
                    bits: cfg.lsh_bits,
                    seed: cfg.base_seed,
                },
                &propensity(&cfg, &train)?,
            )?;
            writeln!(out, "metric\tLSH\texhaustive")?;
            for m in Metric::ALL {
                for k in CUTOFFS {
                    writeln!(
                        out,
                        "{}@{}\t{:.2}\t{:.2}",
                        m.name(),
                        k,
                        100.0 * cmp.lsh.get(m, k),
                        100.0 * cmp.exhaustive.get(m, k)
                    )?;
                }
            }
            writeln!(
                out,
                "build_time_s\t{:.3}\t0.000\nquery_time_s\t{:.3}\t{:.3}",
                secs(cmp.lsh_build_time),
                secs(cmp.lsh_query_time),
                secs(cmp.exhaustive_time)
            )?;
            eprintln!(
                "LSH: mean candidates {:.1}, queries with no candidates {}",
                cmp.mean_candidates, cmp.empty_candidate_queries
            );
        }
    }
    out.flush()?;
    Ok(())
}
