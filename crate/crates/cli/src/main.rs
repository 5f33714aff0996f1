use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};

use neurosketch::data::{gen_gaussian, gen_gmm, gen_uniform, load_csv};
use neurosketch::eval::{
    emit_function_sweep, evaluate, grid_search, write_sweep_csv, CandidateOutcome, Constraints,
    ExactEngine, ExperimentConfig, Grid, UniformSampleBaseline,
};
use neurosketch::query::{
    build_training_set, read_query_file, sample_queries, write_query_file, QuerySampler,
};
use neurosketch::rng;
use neurosketch::theory::{
    avg_sampling_check, coefficient_bound, compare_sizes, construct_network, dqd_experiment,
    max_vertex_error, sampling_error_check, verify_bounds, AvgMeasure, Dist, DqdConfig, NormMode,
};
use neurosketch::{
    Aggregation, Dataset, Engine, NeuroSketch, PredicateKind, Query, QuerySpec, RangeMode,
    SketchConfig, TrainConfig,
};

#[derive(Parser)]
#[command(name = "neurosketch", version, about = "Learned range-aggregate query sketches")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output path; standard output when omitted and the command allows it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset or ingest a CSV file into a dataset cache.
    GenData(GenDataArgs),
    /// Sample a query workload and write it as a query file.
    GenQueries(GenQueriesArgs),
    /// Train a sketch and write it together with a `.meta` summary.
    Build(BuildArgs),
    /// Answer every query in a query file with a stored sketch.
    Query(QueryArgs),
    /// Compare a sketch, the exact oracle and a uniform sample.
    Eval(EvalArgs),
    /// Grid-search sketch configurations under size and latency budgets.
    Bench(BenchArgs),
    /// Build the memorizing network for a test function and check its bounds.
    Construct(ConstructArgs),
    /// Run the data-size / distribution experiments and the sampling checks.
    VerifyDqd(VerifyDqdArgs),
    /// Sweep one query coordinate and record exact and sketch answers.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// uniform, gaussian or gmm.
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Mixture components for `gmm`.
    #[arg(long, default_value_t = 100)]
    components: usize,
    /// Gaussian mean, shared by every axis.
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    /// Ingest this CSV instead of generating data.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Measure column; defaults to the last column.
    #[arg(long)]
    measure: Option<usize>,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// count, sum, avg, std or median.
    #[arg(long, default_value = "count")]
    agg: Aggregation,
    /// Measure attribute; defaults to the dataset's measure column.
    #[arg(long)]
    measure: Option<usize>,
    /// Attributes each query restricts.
    #[arg(long, default_value_t = 1)]
    active: usize,
    /// axis or rotated.
    #[arg(long, default_value = "axis")]
    predicate: PredicateKind,
    /// `uniform` or `fixed:<fraction>`.
    #[arg(long, default_value = "uniform")]
    range: RangeMode,
}

impl SpecArgs {
    fn spec(&self, ds: &Dataset) -> Result<QuerySpec> {
        let m = self.measure.unwrap_or(ds.measure_index());
        let spec = match self.predicate {
            PredicateKind::AxisRange => QuerySpec::axis(self.agg, m, self.active),
            PredicateKind::RotatedRect => QuerySpec::rotated(self.agg, m),
        };
        spec.validate(ds.dims())?;
        Ok(spec)
    }
}

#[derive(Args)]
struct GenQueriesArgs {
    /// Dataset cache; supplies the dimensionality.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1_000)]
    count: usize,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, default_value_t = 4)]
    height: usize,
    #[arg(long, default_value_t = 8)]
    leaves: usize,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 60)]
    first: usize,
    #[arg(long, default_value_t = 30)]
    rest: usize,
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    patience: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch)]
    batch: usize,
    #[arg(long, default_value_t = TrainConfig::default().adam.lr)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    min_leaf_queries: usize,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> SketchConfig {
        let mut train = TrainConfig {
            batch: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            ..TrainConfig::default()
        };
        train.adam.lr = self.lr;
        SketchConfig {
            height: self.height,
            leaves: self.leaves,
            depth: self.depth,
            first: self.first,
            rest: self.rest,
            seed,
            train,
            min_leaf_queries: self.min_leaf_queries,
            ..SketchConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainingArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training workload; sampled when omitted.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Training queries to sample when no query file is given.
    #[arg(long, default_value_t = 10_000)]
    train_count: usize,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    training: TrainingArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long)]
    queries: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Test workload; sampled from the sketch's query spec when omitted.
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000)]
    count: usize,
    #[arg(long, default_value = "uniform")]
    range: RangeMode,
    /// Baseline sample rows; matched to the sketch's bytes when omitted.
    #[arg(long)]
    sample_rows: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    training: TrainingArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Candidate depths (comma separated); the model flags fill any list left out.
    #[arg(long, value_delimiter = ',')]
    depths: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    firsts: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    rests: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    heights: Vec<usize>,
    #[arg(long = "leaf-counts", value_delimiter = ',')]
    leaf_counts: Vec<usize>,
    #[arg(long)]
    max_bytes: Option<usize>,
    #[arg(long)]
    max_latency_us: Option<f64>,
    #[arg(long, default_value_t = 1_000)]
    test_count: usize,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    t: usize,
    /// l1 or linf.
    #[arg(long, default_value = "l1")]
    mode: NormMode,
    /// linear, abs or smooth.
    #[arg(long, default_value = "linear")]
    function: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

#[derive(Args)]
struct VerifyDqdArgs {
    /// Comma-separated distributions: uniform, gaussian, gmm2.
    #[arg(long, value_delimiter = ',', default_value = "uniform,gaussian,gmm2")]
    dists: Vec<Dist>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = 80)]
    width: usize,
    /// Also search the smallest width reaching the target error.
    #[arg(long)]
    search: bool,
    /// Trials for the sampling checks.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// key = value overrides for the experiment (see README).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Query-vector coordinate to sweep.
    #[arg(long, default_value_t = 0)]
    axis: usize,
    /// Base query in query-file syntax; the full range when omitted.
    #[arg(long)]
    fixed: Option<String>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = cli.out.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::GenData(a) => gen_data(a, seed, out).context("gen-data"),
        Command::GenQueries(a) => gen_queries(a, seed, out).context("gen-queries"),
        Command::Build(a) => build(a, seed, out).context("build"),
        Command::Query(a) => query(a, out).context("query"),
        Command::Eval(a) => eval(a, seed, out).context("eval"),
        Command::Bench(a) => bench(a, seed, out).context("bench"),
        Command::Construct(a) => return construct(a, seed, out).context("construct"),
        Command::VerifyDqd(a) => return verify_dqd(a, seed, out).context("verify-dqd"),
        Command::Sweep(a) => sweep(a, out).context("sweep"),
    }?;
    Ok(ExitCode::SUCCESS)
}

fn required(out: Option<&Path>, what: &str) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .with_context(|| format!("--out is required to write the {what}"))
}

/// File at `out`, or standard output.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load_cache(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_query_file(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn gen_data(a: GenDataArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let path = required(out, "dataset cache")?;
    let ds = if let Some(csv) = &a.csv {
        let probe = load_csv(csv, 0)?;
        let m = a.measure.unwrap_or(probe.dims() - 1);
        probe.with_measure(m)?
    } else {
        let ds = match a.dist.as_str() {
            "uniform" => gen_uniform(a.n, a.dims, seed)?,
            "gaussian" => gen_gaussian(a.n, a.dims, &[a.mu], a.sigma, seed)?,
            "gmm" => gen_gmm(a.n, a.dims, a.components, seed)?,
            other => bail!("unknown distribution {other:?}; expected uniform, gaussian or gmm"),
        };
        match a.measure {
            Some(m) => ds.with_measure(m)?,
            None => ds,
        }
    };
    ds.save_cache(&path)?;
    println!("wrote {} rows x {} attributes to {}", ds.n(), ds.dims(), path.display());
    Ok(())
}

fn gen_queries(a: GenQueriesArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let ds = load_data(&a.data)?;
    let spec = a.spec.spec(&ds)?;
    let qs = sample_queries(&spec, ds.dims(), a.count, seed, a.spec.range)?;
    let mut w = sink(out)?;
    write_query_file(&mut w, &qs)?;
    w.flush()?;
    Ok(())
}

fn training_set(t: &TrainingArgs, seed: u64) -> Result<(Dataset, QuerySpec, neurosketch::TrainingSet)> {
    let ds = load_data(&t.data)?;
    let spec = t.spec.spec(&ds)?;
    let queries = match &t.queries {
        Some(p) => load_queries(p)?,
        None => QuerySampler::new(spec, ds.dims(), t.spec.range, rng::derive(seed, 1))?.take(t.train_count),
    };
    // EMPTY answers are replaced with fresh draws from a separate stream.
    let mut refill = QuerySampler::new(spec, ds.dims(), t.spec.range, rng::derive(seed, 2))?;
    let ts = build_training_set(&ds, queries, &spec, &mut refill)?;
    Ok((ds, spec, ts))
}

fn write_meta(path: &Path, sketch: &NeuroSketch) -> Result<()> {
    let mut meta = ExperimentConfig::default();
    let m = sketch.meta();
    let spec = sketch.spec();
    meta.set("agg", spec.agg);
    meta.set("measure", spec.measure_index);
    meta.set("predicate", spec.predicate_kind);
    meta.set("active", spec.active_count);
    meta.set("height", m.height);
    meta.set("leaves", m.leaves);
    meta.set("depth", m.depth);
    meta.set("first", m.first);
    meta.set("rest", m.rest);
    meta.set("seed", m.seed);
    meta.set("params", sketch.param_count());
    meta.set("bytes", sketch.size_bytes());
    let aqc: Vec<String> = sketch.leaves().iter().map(|l| l.aqc.to_string()).collect();
    let err: Vec<String> = sketch.leaves().iter().map(|l| l.train_err.to_string()).collect();
    meta.set("leaf_aqc", aqc.join(","));
    meta.set("leaf_train_mse", err.join(","));
    let mut w = BufWriter::new(File::create(path)?);
    for k in meta.keys() {
        writeln!(w, "{k} = {}", meta.raw(k).unwrap_or_default())?;
    }
    w.flush()?;
    Ok(())
}

fn meta_path(sketch: &Path) -> PathBuf {
    let mut s = sketch.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn build(a: BuildArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let path = required(out, "sketch")?;
    let (ds, spec, ts) = training_set(&a.training, seed)?;
    let sketch = NeuroSketch::build(&ds, &ts, &spec, &a.model.config(seed))?;
    sketch.save(&path)?;
    write_meta(&meta_path(&path), &sketch)?;
    println!(
        "wrote sketch with {} leaves, {} bytes, to {}",
        sketch.leaf_count(),
        sketch.size_bytes(),
        path.display()
    );
    Ok(())
}

fn load_sketch(path: &Path) -> Result<NeuroSketch> {
    NeuroSketch::load(path).with_context(|| format!("loading sketch {}", path.display()))
}

fn query(a: QueryArgs, out: Option<&Path>) -> Result<()> {
    let sketch = load_sketch(&a.sketch)?;
    let qs = load_queries(&a.queries)?;
    let mut w = sink(out)?;
    writeln!(w, "index,answer")?;
    for (i, q) in qs.iter().enumerate() {
        let y = sketch.answer_query(q).with_context(|| format!("query {}", i + 1))?;
        writeln!(w, "{i},{y}")?;
    }
    w.flush()?;
    Ok(())
}

fn eval(a: EvalArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let sketch = load_sketch(&a.sketch)?;
    let ds = load_data(&a.data)?;
    let spec = *sketch.spec();
    let qs = match &a.queries {
        Some(p) => load_queries(p)?,
        None => sample_queries(&spec, ds.dims(), a.count, rng::derive(seed, 3), a.range)?,
    };
    let rows = a
        .sample_rows
        .unwrap_or_else(|| UniformSampleBaseline::rows_for_bytes(&ds, sketch.size_bytes()));
    let baseline = UniformSampleBaseline::new(&ds, spec, rows, rng::derive(seed, 4))?;
    let exact = ExactEngine::new(&ds, spec)?;
    let engines: [&dyn Engine; 3] = [&sketch, &baseline, &exact];
    let report = evaluate(&engines, &qs, &ds, &spec)?;
    report.write_csv(sink(out)?)?;
    Ok(())
}

fn bench(a: BenchArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let (ds, spec, ts) = training_set(&a.training, seed)?;
    let base = a.model.config(seed);
    let or_base = |v: &[usize], d: usize| if v.is_empty() { vec![d] } else { v.to_vec() };
    let grid = Grid {
        depth: or_base(&a.depths, base.depth),
        first: or_base(&a.firsts, base.first),
        rest: or_base(&a.rests, base.rest),
        height: or_base(&a.heights, base.height),
        leaves: or_base(&a.leaf_counts, base.leaves),
    };
    let constraints = Constraints {
        max_bytes: a.max_bytes,
        max_latency_us: a.max_latency_us,
    };
    let found = grid_search(&ts, &spec, &grid, &constraints, &base)?;
    for (cfg, result) in &found.candidates {
        let what = match result {
            CandidateOutcome::Evaluated { val_error, .. } => format!("validation error {val_error:.5}"),
            CandidateOutcome::Skipped(why) => format!("skipped: {why}"),
        };
        eprintln!(
            "depth={} first={} rest={} height={} leaves={}: {what}",
            cfg.depth, cfg.first, cfg.rest, cfg.height, cfg.leaves
        );
    }
    let cfg = found.config;
    eprintln!(
        "selected depth={} first={} rest={} height={} leaves={}",
        cfg.depth, cfg.first, cfg.rest, cfg.height, cfg.leaves
    );
    let test = sample_queries(&spec, ds.dims(), a.test_count, rng::derive(seed, 3), a.training.spec.range)?;
    let rows = UniformSampleBaseline::rows_for_bytes(&ds, found.sketch.size_bytes());
    let baseline = UniformSampleBaseline::new(&ds, spec, rows, rng::derive(seed, 4))?;
    let report = evaluate(&[&found.sketch, &baseline], &test, &ds, &spec)?;
    report.write_csv(sink(out)?)?;
    Ok(())
}

/// Test function and its 1-norm Lipschitz constant.
fn test_function(name: &str, d: usize) -> Result<(Box<dyn Fn(&[f64]) -> f64>, f64)> {
    Ok(match name {
        "linear" => {
            let w: Vec<f64> = (0..d).map(|i| 1.0 / (i + 1) as f64).collect();
            (Box::new(move |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum()), 1.0)
        }
        "abs" => (Box::new(|x: &[f64]| x.iter().map(|v| (v - 0.5).abs()).sum()), 1.0),
        "smooth" => (
            Box::new(|x: &[f64]| x.iter().enumerate().map(|(i, v)| 0.5 * (3.0 * v + i as f64).sin()).sum()),
            1.5,
        ),
        other => bail!("unknown function {other:?}; expected linear, abs or smooth"),
    })
}

fn construct(a: ConstructArgs, seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let (f, rho) = test_function(&a.function, a.dim)?;
    let net = construct_network(&*f, a.t, a.dim, a.mode)?;
    let vertex_err = max_vertex_error(&net, &*f);
    let report = verify_bounds(&net, &*f, rho, a.samples, seed)?;
    let max_a = net.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let memorized = vertex_err <= 1e-9;
    let bound_ok = match a.mode {
        NormMode::L1 => report.l1_pass,
        NormMode::Linf => report.linf_pass.unwrap_or(false),
    };
    let mut w = sink(out)?;
    writeln!(w, "function = {}", a.function)?;
    writeln!(w, "d = {}", a.dim)?;
    writeln!(w, "t = {}", a.t)?;
    writeln!(w, "g_units = {}", net.k() - 1)?;
    writeln!(w, "M = {}", net.M)?;
    writeln!(w, "max_vertex_error = {vertex_err:e}")?;
    writeln!(w, "memorization = {}", pass(memorized))?;
    writeln!(w, "l1_err = {} (bound {})", report.l1_err, report.l1_bound)?;
    match report.linf_pass {
        Some(_) => writeln!(w, "linf_err = {} (bound {})", report.linf_err, report.linf_bound)?,
        None => writeln!(w, "linf_err = {} (no bound for d > 3)", report.linf_err)?,
    }
    writeln!(w, "bound = {}", pass(bound_ok))?;
    writeln!(w, "max_abs_a = {max_a} (bound {})", coefficient_bound(a.dim, rho))?;
    w.flush()?;
    Ok(if memorized && bound_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn verify_dqd(a: VerifyDqdArgs, seed: u64, out: Option<&Path>) -> Result<ExitCode> {
    let conf = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let defaults = DqdConfig::default();
    let mut train = TrainConfig {
        batch: conf.get("batch", defaults.train.batch)?,
        max_epochs: conf.get("epochs", defaults.train.max_epochs)?,
        patience: conf.get("patience", defaults.train.patience)?,
        ..defaults.train
    };
    train.adam.lr = conf.get("lr", defaults.train.adam.lr)?;
    let cfg = DqdConfig {
        width: conf.get("width", a.width)?,
        train_queries: conf.get("train_queries", defaults.train_queries)?,
        test_queries: conf.get("test_queries", defaults.test_queries)?,
        target_error: conf.get("target_error", defaults.target_error)?,
        widths: conf.get_list("widths", &defaults.widths)?,
        train,
        ..defaults
    };
    let report = dqd_experiment(&a.dists, &a.n_values, &cfg, a.search, seed)?;
    report.write_csv(sink(out)?)?;
    if a.search {
        match out {
            Some(p) => {
                let mut s = p.as_os_str().to_owned();
                s.push(".widths.csv");
                report.write_width_csv(BufWriter::new(File::create(PathBuf::from(s))?))?;
            }
            None => report.write_width_csv(io::stdout().lock())?,
        }
    }

    let rows = sampling_error_check(&Dist::Uniform, Aggregation::Count, &[100, 10_000], a.trials, 1_000, seed)?;
    let (win, ratio) = compare_sizes(&rows, 100, 10_000)?;
    let sampling_ok = win >= 0.95 && ratio <= 0.5;
    eprintln!(
        "sampling error: n=1e4 below n=1e2 in {:.0}% of trials, median ratio {ratio:.3}: {}",
        100.0 * win,
        pass(sampling_ok)
    );
    let avg = |xi| avg_sampling_check(&Dist::Uniform, xi, &[10_000], a.trials, 1_000, AvgMeasure::Independent, seed);
    let (wide, narrow) = (avg(0.5)?, avg(0.05)?);
    let wins = wide.iter().zip(&narrow).filter(|(w, n)| w.sup_err < n.sup_err).count();
    let avg_ok = wins as f64 >= 0.9 * a.trials as f64;
    eprintln!(
        "AVG restriction: xi=0.5 below xi=0.05 in {wins}/{} trials: {}",
        a.trials,
        pass(avg_ok)
    );
    Ok(if sampling_ok && avg_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn sweep(a: SweepArgs, out: Option<&Path>) -> Result<()> {
    let sketch = load_sketch(&a.sketch)?;
    let ds = load_data(&a.data)?;
    let spec = *sketch.spec();
    let fixed: Query = match &a.fixed {
        Some(s) => s.parse()?,
        None => match spec.predicate_kind {
            PredicateKind::AxisRange => Query::Axis(neurosketch::QueryInstance::full(ds.dims())),
            PredicateKind::RotatedRect => "0,0;1,1;0".parse()?,
        },
    };
    let rows = emit_function_sweep(&sketch, &ds, &spec, a.axis, &fixed, a.steps)?;
    write_sweep_csv(&rows, sink(out)?)?;
    Ok(())
}
