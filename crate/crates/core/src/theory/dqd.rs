//! Data-size and distribution dependence of the error of a single small
//! network answering one-dimensional COUNT queries.
//!
//! For every `(distribution, n)` cell a fresh dataset is drawn, a sketch
//! with partitioning disabled is trained on exact answers and evaluated on
//! held-out queries. The total error is split into an approximation part
//! (model against the distribution query function) and a sampling part
//! (observed against distribution query function).

use std::io::Write;

use rayon::prelude::*;

use super::dist::Dist;
use super::sampling::SortedColumn;
use crate::error::{Error, Result};
use crate::eval::{csv_err, measure_latency, normalized_mae};
use crate::mlp::TrainConfig;
use crate::query::{sample_queries, Aggregation, Query, QuerySpec, RangeMode, TrainingSet};
use crate::rng;
use crate::sketch::{NeuroSketch, SketchConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DqdConfig {
    /// Hidden units of the fixed single-hidden-layer network.
    pub width: usize,
    pub train_queries: usize,
    pub test_queries: usize,
    pub train: TrainConfig,
    /// Target normalized error of the width search.
    pub target_error: f64,
    /// Candidate widths, tried in ascending order.
    pub widths: Vec<usize>,
    /// Timed calls per latency measurement.
    pub latency_calls: usize,
}

impl Default for DqdConfig {
    fn default() -> Self {
        Self {
            width: 80,
            train_queries: 10_000,
            test_queries: 1_000,
            // Small one-dimensional problems converge slowly; the sketch
            // defaults stop long before the fit stabilizes.
            train: TrainConfig {
                batch: 64,
                max_epochs: 1_000,
                patience: 50,
                ..TrainConfig::default()
            },
            target_error: 0.01,
            widths: vec![10, 20, 40, 80, 160, 320],
            latency_calls: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqdRow {
    pub dist: String,
    pub n: usize,
    pub width: usize,
    pub norm_err: f64,
    pub delta_a_est: f64,
    pub delta_s_est: f64,
    pub params: usize,
    pub latency_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthSearch {
    pub dist: String,
    pub n: usize,
    /// Smallest candidate width reaching the target, `None` if none does.
    pub min_width: Option<usize>,
    /// Every width tried with its normalized error.
    pub tried: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DqdReport {
    pub rows: Vec<DqdRow>,
    pub searches: Vec<WidthSearch>,
}

impl DqdReport {
    pub const HEADER: [&'static str; 8] = [
        "dist",
        "n",
        "width",
        "norm_err",
        "delta_a_est",
        "delta_s_est",
        "params",
        "latency_us",
    ];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::HEADER).map_err(csv_err)?;
        for r in &self.rows {
            out.write_record([
                r.dist.clone(),
                r.n.to_string(),
                r.width.to_string(),
                r.norm_err.to_string(),
                r.delta_a_est.to_string(),
                r.delta_s_est.to_string(),
                r.params.to_string(),
                format!("{:.3}", r.latency_us),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `dist,n,min_width`, with an empty field when no width reached the target.
    pub fn write_width_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["dist", "n", "min_width"]).map_err(csv_err)?;
        for s in &self.searches {
            out.write_record([
                s.dist.clone(),
                s.n.to_string(),
                s.min_width.map(|w| w.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn row(&self, dist: &str, n: usize) -> Option<&DqdRow> {
        self.rows.iter().find(|r| r.dist == dist && r.n == n)
    }

    /// Errors for one distribution, ordered as the data sizes were given.
    pub fn errors(&self, dist: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.dist == dist).map(|r| r.norm_err).collect()
    }

    pub fn min_widths(&self, dist: &str) -> Vec<Option<usize>> {
        self.searches.iter().filter(|s| s.dist == dist).map(|s| s.min_width).collect()
    }
}

/// Number of adjacent pairs where the sequence increases. `None` sorts
/// above every finite value.
pub fn inversions<T: PartialOrd>(seq: &[Option<T>]) -> usize {
    seq.windows(2)
        .filter(|w| match (&w[0], &w[1]) {
            (Some(a), Some(b)) => b > a,
            (Some(_), None) => true,
            _ => false,
        })
        .count()
}

/// One trained cell: data, workload and exact and expected answers.
struct Cell {
    dist: Dist,
    n: usize,
    train: TrainingSet,
    test: Vec<Query>,
    truth: Vec<f64>,
    expected: Vec<f64>,
    seed: u64,
}

fn spec() -> QuerySpec {
    QuerySpec::axis(Aggregation::Count, 0, 1)
}

impl Cell {
    fn new(dist: &Dist, n: usize, cfg: &DqdConfig, seed: u64) -> Result<Self> {
        let ds = dist.sample(n, rng::derive(seed, 0))?;
        let col: Vec<f64> = ds.rows().map(|r| r[0]).collect();
        let sorted = SortedColumn::new(&col, &col);
        let label = |q: &Query| match q {
            Query::Axis(q) => sorted.count(q.c[0], q.r[0]),
            Query::Rotated(_) => unreachable!("axis workload"),
        };
        let train_q = sample_queries(&spec(), 1, cfg.train_queries, rng::derive(seed, 1), RangeMode::Uniform)?;
        let vectors: Vec<f64> = train_q.iter().flat_map(|q| q.to_vector()).collect();
        let labels: Vec<f64> = train_q.iter().map(label).collect();
        let train = TrainingSet::new(2, vectors, labels)?;
        let test = sample_queries(&spec(), 1, cfg.test_queries, rng::derive(seed, 2), RangeMode::Uniform)?;
        let truth = test.iter().map(label).collect();
        let expected = test
            .iter()
            .map(|q| {
                let v = q.to_vector();
                dist.expected_count(n, v[0], v[1])
            })
            .collect();
        Ok(Self {
            dist: dist.clone(),
            n,
            train,
            test,
            truth,
            expected,
            seed,
        })
    }

    fn run(&self, width: usize, cfg: &DqdConfig) -> Result<DqdRow> {
        let sketch_cfg = SketchConfig {
            seed: rng::derive(self.seed, 3),
            train: cfg.train,
            min_leaf_queries: 1,
            ..SketchConfig::single(2, width, 1)
        };
        let sketch = NeuroSketch::build_from_training(&self.train, &spec(), &sketch_cfg)?;
        let preds: Vec<f64> = self.test.iter().map(|q| sketch.answer_unchecked(&q.to_vector())).collect();
        let norm_err = normalized_mae(&preds, &self.truth)?;
        let scale = self.truth.iter().map(|t| t.abs()).sum::<f64>() / self.truth.len() as f64;
        let mean_diff = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64 / scale
        };
        let latency = measure_latency(&sketch, &self.test, cfg.latency_calls);
        Ok(DqdRow {
            dist: self.dist.name(),
            n: self.n,
            width,
            norm_err,
            delta_a_est: mean_diff(&preds, &self.expected),
            delta_s_est: mean_diff(&self.truth, &self.expected),
            params: sketch.param_count(),
            latency_us: latency.mean_us,
        })
    }
}

/// Fixed-width error per `(dist, n)`; with `search` set, also the smallest
/// width in `cfg.widths` whose normalized error reaches `cfg.target_error`.
pub fn dqd_experiment(
    dists: &[Dist],
    n_values: &[usize],
    cfg: &DqdConfig,
    search: bool,
    seed: u64,
) -> Result<DqdReport> {
    if dists.is_empty() || n_values.is_empty() {
        return Err(Error::arg("need at least one distribution and one data size"));
    }
    if cfg.width == 0 || cfg.train_queries == 0 || cfg.test_queries == 0 {
        return Err(Error::arg("width and query counts must be positive"));
    }
    if search && (cfg.widths.is_empty() || cfg.widths.contains(&0)) {
        return Err(Error::arg("width grid must be non-empty and positive"));
    }
    let mut widths = cfg.widths.clone();
    widths.sort_unstable();
    widths.dedup();

    let cells: Vec<(usize, &Dist, usize)> = dists
        .iter()
        .enumerate()
        .flat_map(|(i, d)| n_values.iter().enumerate().map(move |(j, &n)| (i * n_values.len() + j, d, n)))
        .collect();
    let results: Vec<(DqdRow, Option<WidthSearch>)> = cells
        .par_iter()
        .map(|&(idx, dist, n)| {
            let cell = Cell::new(dist, n, cfg, rng::derive(seed, idx as u64))?;
            let row = cell.run(cfg.width, cfg)?;
            let found = if search {
                let mut tried = Vec::new();
                let mut min_width = None;
                for &w in &widths {
                    let err = if w == cfg.width { row.norm_err } else { cell.run(w, cfg)?.norm_err };
                    tried.push((w, err));
                    if err <= cfg.target_error {
                        min_width = Some(w);
                        break;
                    }
                }
                Some(WidthSearch {
                    dist: dist.name(),
                    n,
                    min_width,
                    tried,
                })
            } else {
                None
            };
            Ok((row, found))
        })
        .collect::<Result<_>>()?;

    let mut report = DqdReport::default();
    for (row, found) in results {
        report.rows.push(row);
        report.searches.extend(found);
    }
    Ok(report)
}
