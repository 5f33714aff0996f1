//! Accuracy and latency measurement, the uniform-sampling baseline, grid
//! search over sketch configurations and report emission.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::query::{label_queries, scan_query, Answer, PredicateKind, Query, QuerySpec, TrainingSet};
use crate::rng;
use crate::sketch::{NeuroSketch, SketchConfig};

/// Mean absolute error divided by the mean absolute truth.
pub fn normalized_mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Metric(format!(
            "{} predictions for {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Metric("no queries to score".into()));
    }
    let n = truths.len() as f64;
    let scale = truths.iter().map(|t| t.abs()).sum::<f64>() / n;
    if scale == 0.0 {
        return Err(Error::Metric("all truths are zero; normalized error undefined".into()));
    }
    let mae = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(mae / scale)
}

/// As [`normalized_mae`], skipping pairs whose truth is EMPTY. An EMPTY
/// prediction against a defined truth is scored as a prediction of 0.
pub fn normalized_mae_answers(preds: &[Answer], truths: &[Answer]) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::Metric("prediction and truth counts differ".into()));
    }
    let (p, t): (Vec<f64>, Vec<f64>) = preds
        .iter()
        .zip(truths)
        .filter_map(|(p, t)| t.map(|t| (p.unwrap_or(0.0), t)))
        .unzip();
    normalized_mae(&p, &t)
}

/// Anything that answers queries: a sketch, the exact oracle or a sample.
pub trait Engine: Sync {
    fn name(&self) -> &str;
    fn answer(&self, q: &Query) -> Answer;
    /// Storage footprint in bytes.
    fn size_bytes(&self) -> usize;
}

impl Engine for NeuroSketch {
    fn name(&self) -> &str {
        "neurosketch"
    }

    fn answer(&self, q: &Query) -> Answer {
        Some(self.answer_unchecked(&q.to_vector()))
    }

    fn size_bytes(&self) -> usize {
        NeuroSketch::size_bytes(self)
    }
}

/// Full scan of the dataset.
pub struct ExactEngine<'a> {
    ds: &'a Dataset,
    spec: QuerySpec,
}

impl<'a> ExactEngine<'a> {
    pub fn new(ds: &'a Dataset, spec: QuerySpec) -> Result<Self> {
        spec.validate(ds.dims())?;
        Ok(Self { ds, spec })
    }
}

impl Engine for ExactEngine<'_> {
    fn name(&self) -> &str {
        "exact"
    }

    fn answer(&self, q: &Query) -> Answer {
        scan_query(self.ds, q, self.spec.agg, self.spec.measure_index)
    }

    fn size_bytes(&self) -> usize {
        self.ds.storage_bytes()
    }
}

/// Scan over `k` rows sampled without replacement; COUNT and SUM are scaled
/// by `n / k`.
pub struct UniformSampleBaseline {
    sample: Dataset,
    spec: QuerySpec,
    scale: f64,
}

impl UniformSampleBaseline {
    pub fn new(ds: &Dataset, spec: QuerySpec, k: usize, seed: u64) -> Result<Self> {
        spec.validate(ds.dims())?;
        if k == 0 || k > ds.n() {
            return Err(Error::arg(format!("sample size {k} outside [1, {}]", ds.n())));
        }
        let mut picked = index::sample(&mut rng::seeded(seed), ds.n(), k).into_vec();
        picked.sort_unstable();
        Ok(Self {
            sample: ds.subset(&picked)?,
            spec,
            scale: ds.n() as f64 / k as f64,
        })
    }

    /// Largest sample whose storage fits in `bytes`.
    pub fn rows_for_bytes(ds: &Dataset, bytes: usize) -> usize {
        (bytes / (ds.dims() * 8)).clamp(1, ds.n())
    }

    pub fn sample_size(&self) -> usize {
        self.sample.n()
    }
}

impl Engine for UniformSampleBaseline {
    fn name(&self) -> &str {
        "uniform-sample"
    }

    fn answer(&self, q: &Query) -> Answer {
        let a = scan_query(&self.sample, q, self.spec.agg, self.spec.measure_index);
        if self.spec.agg.is_additive() {
            a.map(|v| v * self.scale)
        } else {
            a
        }
    }

    fn size_bytes(&self) -> usize {
        self.sample.storage_bytes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineReport {
    pub name: String,
    pub normalized_mae: f64,
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
    pub bytes: usize,
    /// Queries with a defined truth that the engine answered EMPTY.
    pub empty_answers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub queries: usize,
    pub engines: Vec<EngineReport>,
}

impl EvalReport {
    pub const HEADER: [&'static str; 8] = [
        "engine",
        "queries",
        "normalized_mae",
        "bytes",
        "empty_answers",
        "mean_us",
        "median_us",
        "p99_us",
    ];

    /// CSV with the timing columns last so they can be cut before diffing.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::HEADER).map_err(csv_err)?;
        for e in &self.engines {
            out.write_record([
                e.name.clone(),
                self.queries.to_string(),
                e.normalized_mae.to_string(),
                e.bytes.to_string(),
                e.empty_answers.to_string(),
                format!("{:.3}", e.mean_us),
                format!("{:.3}", e.median_us),
                format!("{:.3}", e.p99_us),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn engine(&self, name: &str) -> Option<&EngineReport> {
        self.engines.iter().find(|e| e.name == name)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("{other:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
}

/// Times single calls after one warm-up pass, cycling through `queries`
/// until at least `min_calls` calls have been timed.
pub fn measure_latency(engine: &dyn Engine, queries: &[Query], min_calls: usize) -> LatencyStats {
    for q in queries {
        std::hint::black_box(engine.answer(q));
    }
    let calls = min_calls.max(queries.len());
    let mut times = Vec::with_capacity(calls);
    for i in 0..calls {
        let q = &queries[i % queries.len()];
        let start = Instant::now();
        std::hint::black_box(engine.answer(std::hint::black_box(q)));
        times.push(start.elapsed().as_secs_f64() * 1e6);
    }
    times.sort_by(f64::total_cmp);
    let m = times.len();
    LatencyStats {
        mean_us: times.iter().sum::<f64>() / m as f64,
        median_us: if m % 2 == 1 {
            times[m / 2]
        } else {
            0.5 * (times[m / 2 - 1] + times[m / 2])
        },
        p99_us: times[((m as f64 * 0.99).ceil() as usize).clamp(1, m) - 1],
    }
}

pub const MIN_TIMED_CALLS: usize = 1_000;

/// Accuracy against the exact oracle, latency and size for every engine.
pub fn evaluate(
    engines: &[&dyn Engine],
    queries: &[Query],
    ds: &Dataset,
    spec: &QuerySpec,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::arg("no test queries"));
    }
    let truths = label_queries(ds, queries, spec)?;
    let mut reports = Vec::with_capacity(engines.len());
    for engine in engines {
        let preds: Vec<Answer> = queries.iter().map(|q| engine.answer(q)).collect();
        let empty_answers = preds
            .iter()
            .zip(&truths)
            .filter(|(p, t)| p.is_none() && t.is_some())
            .count();
        let nmae = normalized_mae_answers(&preds, &truths)?;
        let lat = measure_latency(*engine, queries, MIN_TIMED_CALLS);
        reports.push(EngineReport {
            name: engine.name().to_string(),
            normalized_mae: nmae,
            mean_us: lat.mean_us,
            median_us: lat.median_us,
            p99_us: lat.p99_us,
            bytes: engine.size_bytes(),
            empty_answers,
        });
    }
    Ok(EvalReport {
        queries: queries.len(),
        engines: reports,
    })
}

/// Candidate values per sketch hyper-parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub depth: Vec<usize>,
    pub first: Vec<usize>,
    pub rest: Vec<usize>,
    pub height: Vec<usize>,
    pub leaves: Vec<usize>,
}

impl Grid {
    pub fn single(cfg: &SketchConfig) -> Self {
        Self {
            depth: vec![cfg.depth],
            first: vec![cfg.first],
            rest: vec![cfg.rest],
            height: vec![cfg.height],
            leaves: vec![cfg.leaves],
        }
    }

    /// Every combination in lexicographic `(depth, first, rest, height,
    /// leaves)` order, each list visited ascending.
    pub fn configs(&self, base: &SketchConfig) -> Vec<SketchConfig> {
        let sorted = |v: &[usize]| {
            let mut v = v.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        };
        let (ds, fs, rs, hs, ls) = (
            sorted(&self.depth),
            sorted(&self.first),
            sorted(&self.rest),
            sorted(&self.height),
            sorted(&self.leaves),
        );
        let mut out = Vec::new();
        for &depth in &ds {
            for &first in &fs {
                for &rest in &rs {
                    for &height in &hs {
                        for &leaves in &ls {
                            out.push(SketchConfig {
                                depth,
                                first,
                                rest,
                                height,
                                leaves,
                                ..*base
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Constraints {
    pub max_bytes: Option<usize>,
    pub max_latency_us: Option<f64>,
}

/// Nanoseconds per parameter assumed by the latency pre-check; deliberately
/// optimistic so the post-build measurement is the binding test.
const COST_MODEL_NS_PER_PARAM: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateOutcome {
    Evaluated { val_error: f64, median_us: f64 },
    Skipped(String),
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub config: SketchConfig,
    pub sketch: NeuroSketch,
    pub val_error: f64,
    pub candidates: Vec<(SketchConfig, CandidateOutcome)>,
}

/// Builds every feasible grid configuration on 90% of `ts` and keeps the
/// one with the lowest normalized error on the remaining 10%; ties go to
/// the lexicographically first configuration.
pub fn grid_search(
    ts: &TrainingSet,
    spec: &QuerySpec,
    grid: &Grid,
    constraints: &Constraints,
    base: &SketchConfig,
) -> Result<SearchResult> {
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Err(Error::Search("empty grid".into()));
    }
    let (train, val) = ts.split(0.1, rng::derive(base.seed, 0x5ea));
    if val.is_empty() || train.is_empty() {
        return Err(Error::Search("training set too small to hold out validation queries".into()));
    }
    let val_queries: Vec<Query> = val
        .iter()
        .map(|(q, _)| Query::from_vector(spec.predicate_kind, q))
        .collect::<Result<_>>()?;
    let d = ts.dim();
    let mut best: Option<(f64, SketchConfig, NeuroSketch)> = None;
    let mut candidates = Vec::new();
    for cfg in configs {
        let skip = |why: String| (cfg, CandidateOutcome::Skipped(why));
        if cfg.leaves > 1usize.checked_shl(cfg.height as u32).unwrap_or(usize::MAX) {
            candidates.push(skip(format!("{} leaves exceed 2^{}", cfg.leaves, cfg.height)));
            continue;
        }
        let bytes = cfg.encoded_len(d)?;
        if let Some(max) = constraints.max_bytes {
            if bytes > max {
                candidates.push(skip(format!("{bytes} bytes exceed {max}")));
                continue;
            }
        }
        if let Some(max) = constraints.max_latency_us {
            let est = cfg.params_per_leaf(d)? as f64 * COST_MODEL_NS_PER_PARAM / 1e3;
            if est > max {
                candidates.push(skip(format!("estimated {est:.2} us exceeds {max} us")));
                continue;
            }
        }
        let sketch = match NeuroSketch::build_from_training(&train, spec, &cfg) {
            Ok(s) => s,
            Err(e @ (Error::Build(_) | Error::Merge(_))) => {
                candidates.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let lat = measure_latency(&sketch, &val_queries, MIN_TIMED_CALLS);
        if let Some(max) = constraints.max_latency_us {
            if lat.median_us > max {
                candidates.push(skip(format!("measured {:.2} us exceeds {max} us", lat.median_us)));
                continue;
            }
        }
        let preds: Vec<f64> = val.iter().map(|(q, _)| sketch.answer_unchecked(q)).collect();
        let err = normalized_mae(&preds, val.labels())?;
        candidates.push((
            cfg,
            CandidateOutcome::Evaluated {
                val_error: err,
                median_us: lat.median_us,
            },
        ));
        if best.as_ref().is_none_or(|(b, _, _)| err < *b) {
            best = Some((err, cfg, sketch));
        }
    }
    match best {
        Some((val_error, config, sketch)) => Ok(SearchResult {
            config,
            sketch,
            val_error,
            candidates,
        }),
        None => Err(Error::Search("no feasible config satisfies the constraints".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub coordinate: f64,
    pub truth: Answer,
    pub answer: Answer,
}

/// Sweeps query-vector coordinate `axis` of `fixed` uniformly across its
/// feasible range in `steps` points, recording exact and engine answers.
pub fn emit_function_sweep(
    engine: &dyn Engine,
    ds: &Dataset,
    spec: &QuerySpec,
    axis: usize,
    fixed: &Query,
    steps: usize,
) -> Result<Vec<SweepRow>> {
    if steps == 0 {
        return Err(Error::arg("steps must be at least 1"));
    }
    let base = fixed.to_vector();
    if axis >= base.len() {
        return Err(Error::arg(format!("axis {axis} outside query vector of length {}", base.len())));
    }
    let (lo, hi) = match spec.predicate_kind {
        PredicateKind::AxisRange => {
            let half = base.len() / 2;
            // c_i ranges over [0, 1 - r_i] and r_i over [0, 1 - c_i].
            let partner = if axis < half { base[axis + half] } else { base[axis - half] };
            (0.0, 1.0 - partner)
        }
        PredicateKind::RotatedRect if axis == 4 => (0.0, std::f64::consts::FRAC_PI_2 * (1.0 - 1e-9)),
        PredicateKind::RotatedRect => (0.0, 1.0),
    };
    let mut rows = Vec::with_capacity(steps);
    let mut queries = Vec::with_capacity(steps);
    for i in 0..steps {
        let coordinate = if steps == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (steps - 1) as f64
        };
        let mut v = base.clone();
        v[axis] = coordinate;
        queries.push((coordinate, Query::from_vector(spec.predicate_kind, &v)?));
    }
    let qs: Vec<Query> = queries.iter().map(|(_, q)| q.clone()).collect();
    let truths = label_queries(ds, &qs, spec)?;
    for ((coordinate, q), truth) in queries.into_iter().zip(truths) {
        rows.push(SweepRow {
            coordinate,
            truth,
            answer: engine.answer(&q),
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["coordinate", "truth", "answer", "empty_truth"]).map_err(csv_err)?;
    let show = |a: Answer| a.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.coordinate.to_string(),
            show(r.truth),
            show(r.answer),
            r.truth.is_none().to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Flat `key = value` experiment configuration; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::arg(format!("config line {}: expected key = value", i + 1)));
            };
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::arg(format!("config line {}: empty key", i + 1)));
            }
            if values.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::arg(format!("config line {}: duplicate key {key:?}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Typed value, or `default` when the key is absent.
    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::arg(format!("config key {key:?}: cannot parse {v:?}"))),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::arg(format!("config key {key:?}: cannot parse {s:?}")))
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_uniform;
    use crate::mlp::TrainConfig;
    use crate::query::{sample_queries, sample_training_set, Aggregation, QueryInstance, RangeMode};

    #[test]
    fn metric_arithmetic() {
        assert_eq!(normalized_mae(&[1.5, 2.5], &[1.0, 3.0]).unwrap(), 0.25);
        assert_eq!(normalized_mae(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        let k = 7.5;
        let a = normalized_mae(&[1.5, 2.5, 4.0], &[1.0, 3.0, 5.0]).unwrap();
        let b = normalized_mae(&[1.5 * k, 2.5 * k, 4.0 * k], &[k, 3.0 * k, 5.0 * k]).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(matches!(normalized_mae(&[1.0], &[0.0]), Err(Error::Metric(_))));
        assert!(normalized_mae(&[], &[]).is_err());
    }

    #[test]
    fn empty_truths_are_skipped() {
        let got = normalized_mae_answers(&[Some(1.5), Some(100.0), None], &[Some(1.0), None, Some(3.0)]).unwrap();
        // Pairs (1.5, 1) and (0, 3): mae 1.75, scale 2.
        assert_eq!(got, 0.875);
    }

    fn small_world() -> (Dataset, QuerySpec, Vec<Query>) {
        let ds = gen_uniform(3_000, 2, 1).unwrap();
        let spec = QuerySpec::axis(Aggregation::Count, 0, 1);
        let qs = sample_queries(&spec, 2, 200, 2, RangeMode::Uniform).unwrap();
        (ds, spec, qs)
    }

    #[test]
    fn exact_engine_scores_zero() {
        let (ds, spec, qs) = small_world();
        let exact = ExactEngine::new(&ds, spec).unwrap();
        let full = UniformSampleBaseline::new(&ds, spec, ds.n(), 3).unwrap();
        let report = evaluate(&[&exact, &full], &qs, &ds, &spec).unwrap();
        assert_eq!(report.engines.len(), 2);
        assert_eq!(report.engine("exact").unwrap().normalized_mae, 0.0);
        assert_eq!(report.engine("uniform-sample").unwrap().normalized_mae, 0.0);
        assert_eq!(report.queries, 200);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("engine,queries,normalized_mae"));
    }

    #[test]
    fn sample_count_is_unbiased() {
        let ds = gen_uniform(2_000, 1, 5).unwrap();
        let spec = QuerySpec::axis(Aggregation::Count, 0, 1);
        let q = Query::Axis(QueryInstance::new(vec![0.2], vec![0.3]).unwrap());
        let truth = scan_query(&ds, &q, spec.agg, 0).unwrap();
        let est: Vec<f64> = (0..100)
            .map(|s| UniformSampleBaseline::new(&ds, spec, 200, s).unwrap().answer(&q).unwrap())
            .collect();
        let mean = est.iter().sum::<f64>() / 100.0;
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 99.0;
        let se = (var / 100.0).sqrt();
        assert!((mean - truth).abs() <= 2.0 * se, "mean {mean}, truth {truth}, se {se}");
    }

    #[test]
    fn sample_avg_propagates_empty() {
        let ds = gen_uniform(1_000, 1, 6).unwrap();
        let spec = QuerySpec::axis(Aggregation::Avg, 0, 1);
        let b = UniformSampleBaseline::new(&ds, spec, 5, 1).unwrap();
        let q = Query::Axis(QueryInstance::new(vec![0.5], vec![1e-9]).unwrap());
        assert_eq!(b.answer(&q), None);
        assert!(UniformSampleBaseline::new(&ds, spec, 0, 1).is_err());
        assert!(UniformSampleBaseline::new(&ds, spec, 1_001, 1).is_err());
    }

    fn quick_base() -> SketchConfig {
        SketchConfig {
            seed: 1,
            train: TrainConfig { max_epochs: 10, ..Default::default() },
            ..SketchConfig::single(2, 8, 1)
        }
    }

    #[test]
    fn single_config_grid() {
        let (ds, spec, _) = small_world();
        let ts = sample_training_set(&ds, &spec, 1_500, RangeMode::Uniform, 3).unwrap();
        let base = quick_base();
        let r = grid_search(&ts, &spec, &Grid::single(&base), &Constraints::default(), &base).unwrap();
        assert_eq!(r.config, base);
        assert_eq!(r.candidates.len(), 1);
    }

    #[test]
    fn byte_budget_below_everything() {
        let (ds, spec, _) = small_world();
        let ts = sample_training_set(&ds, &spec, 500, RangeMode::Uniform, 3).unwrap();
        let base = quick_base();
        let c = Constraints { max_bytes: Some(10), max_latency_us: None };
        let err = grid_search(&ts, &spec, &Grid::single(&base), &c, &base).unwrap_err();
        assert!(matches!(err, Error::Search(ref m) if m.contains("no feasible config")), "{err}");
    }

    #[test]
    fn lexicographic_order() {
        let grid = Grid {
            depth: vec![3, 2],
            first: vec![4],
            rest: vec![4],
            height: vec![0],
            leaves: vec![1],
        };
        let cfgs = grid.configs(&quick_base());
        assert_eq!(cfgs.iter().map(|c| c.depth).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn sweep_shapes() {
        let (ds, spec, _) = small_world();
        let exact = ExactEngine::new(&ds, spec).unwrap();
        let fixed = Query::Axis(QueryInstance::full(2));
        let rows = emit_function_sweep(&exact, &ds, &spec, 0, &fixed, 3).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.truth == r.answer));
        // Axis 0 is c_0, constrained by r_0 = 1 to the single value 0.
        assert!(rows.iter().all(|r| r.coordinate == 0.0));
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn avg_sweep_flags_empty() {
        let ds = gen_uniform(50, 1, 2).unwrap();
        let spec = QuerySpec::axis(Aggregation::Avg, 0, 1);
        let exact = ExactEngine::new(&ds, spec).unwrap();
        let fixed = Query::Axis(QueryInstance::new(vec![0.0], vec![0.001]).unwrap());
        let rows = emit_function_sweep(&exact, &ds, &spec, 0, &fixed, 200).unwrap();
        assert!(rows.iter().any(|r| r.truth.is_none()));
        assert!((rows.last().unwrap().coordinate - 0.999).abs() < 1e-12);
    }

    #[test]
    fn config_file() {
        let text = "# experiment\nn = 1000\nwidths = 10, 20,40\nname=gmm # trailing\n\n";
        let cfg = ExperimentConfig::parse(text.as_bytes()).unwrap();
        assert_eq!(cfg.get("n", 0usize).unwrap(), 1000);
        assert_eq!(cfg.get_list("widths", &[1usize]).unwrap(), vec![10, 20, 40]);
        assert_eq!(cfg.get("missing", 7u32).unwrap(), 7);
        assert_eq!(cfg.raw("name"), Some("gmm"));
        assert!(cfg.get::<usize>("name", 0).is_err());
        assert!(ExperimentConfig::parse("novalue\n".as_bytes()).is_err());
        assert!(ExperimentConfig::parse("a=1\na=2\n".as_bytes()).is_err());
    }
}
