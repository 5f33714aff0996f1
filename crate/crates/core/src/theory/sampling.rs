//! Monte-Carlo checks of how far observed query functions sit from their
//! distribution counterparts as the data size grows.

use std::str::FromStr;

use crate::data::{gen_uniform, Dataset, NormParams};
use crate::error::{Error, Result};
use crate::query::{Aggregation, Query, QuerySampler, QuerySpec, RangeMode};
use crate::rng;

use super::dist::Dist;

/// One-dimensional column sorted by its predicate attribute, with prefix
/// sums of the measure for O(log n) COUNT and SUM over ranges.
pub struct SortedColumn {
    keys: Vec<f64>,
    prefix: Vec<f64>,
}

impl SortedColumn {
    pub fn new(keys: &[f64], measures: &[f64]) -> Self {
        let mut pairs: Vec<(f64, f64)> = keys.iter().copied().zip(measures.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(pairs.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &(_, m) in &pairs {
            acc += m;
            prefix.push(acc);
        }
        Self {
            keys: pairs.into_iter().map(|p| p.0).collect(),
            prefix,
        }
    }

    fn bounds(&self, c: f64, r: f64) -> (usize, usize) {
        let lo = self.keys.partition_point(|&x| x < c);
        let hi = if c + r >= 1.0 {
            self.keys.len()
        } else {
            self.keys.partition_point(|&x| x < c + r)
        };
        (lo, hi.max(lo))
    }

    pub fn count(&self, c: f64, r: f64) -> f64 {
        let (lo, hi) = self.bounds(c, r);
        (hi - lo) as f64
    }

    pub fn sum(&self, c: f64, r: f64) -> f64 {
        let (lo, hi) = self.bounds(c, r);
        self.prefix[hi] - self.prefix[lo]
    }
}

fn range_of(q: &Query) -> (f64, f64) {
    match q {
        Query::Axis(q) => (q.c[0], q.r[0]),
        Query::Rotated(_) => unreachable!("one-dimensional sampler emits ranges"),
    }
}

fn range_sampler(seed: u64) -> QuerySampler {
    QuerySampler::new(QuerySpec::axis(Aggregation::Count, 0, 1), 1, RangeMode::Uniform, seed)
        .expect("valid one-dimensional spec")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRow {
    pub trial: usize,
    pub n: usize,
    /// `sup_q (1/n) |f_D(q) - f_chi(q)|` over the sampled queries.
    pub sup_err: f64,
}

/// Sup sampling error of COUNT or SUM (measure = the attribute itself) on
/// one-dimensional data, per trial and per data size.
pub fn sampling_error_check(
    dist: &Dist,
    agg: Aggregation,
    n_values: &[usize],
    trials: usize,
    queries: usize,
    seed: u64,
) -> Result<Vec<SamplingRow>> {
    if !matches!(agg, Aggregation::Count | Aggregation::Sum) {
        return Err(Error::arg("sampling check supports COUNT and SUM"));
    }
    if n_values.is_empty() || trials == 0 || queries == 0 {
        return Err(Error::arg("need data sizes, trials and queries"));
    }
    let mut rows = Vec::with_capacity(n_values.len() * trials);
    for trial in 0..trials {
        let trial_seed = rng::derive(seed, trial as u64);
        for (k, &n) in n_values.iter().enumerate() {
            let ds = dist.sample(n, rng::derive(trial_seed, 2 * k as u64))?;
            let col: Vec<f64> = ds.rows().map(|r| r[0]).collect();
            let sorted = SortedColumn::new(&col, &col);
            let mut sampler = range_sampler(rng::derive(trial_seed, 2 * k as u64 + 1));
            let mut sup: f64 = 0.0;
            for _ in 0..queries {
                let (c, r) = range_of(&sampler.sample());
                let (observed, expected) = match agg {
                    Aggregation::Count => (sorted.count(c, r), dist.expected_count(n, c, r)),
                    _ => (sorted.sum(c, r), dist.expected_sum(n, c, r)),
                };
                sup = sup.max((observed - expected).abs() / n as f64);
            }
            rows.push(SamplingRow { trial, n, sup_err: sup });
        }
    }
    Ok(rows)
}

/// Over trials, the fraction where the error at `n_b` is below the error at
/// `n_a`, and the median of `err(n_b) / err(n_a)`.
pub fn compare_sizes(rows: &[SamplingRow], n_a: usize, n_b: usize) -> Result<(f64, f64)> {
    let trials: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.trial).collect();
    let mut wins = 0usize;
    let mut ratios = Vec::new();
    for &t in &trials {
        let find = |n: usize| rows.iter().find(|r| r.trial == t && r.n == n).map(|r| r.sup_err);
        let (Some(a), Some(b)) = (find(n_a), find(n_b)) else {
            return Err(Error::arg(format!("trial {t} lacks sizes {n_a} and {n_b}")));
        };
        if b < a {
            wins += 1;
        }
        ratios.push(if a > 0.0 { b / a } else { f64::INFINITY });
    }
    ratios.sort_by(f64::total_cmp);
    Ok((wins as f64 / trials.len() as f64, median_sorted(&ratios)))
}

fn median_sorted(xs: &[f64]) -> f64 {
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Which attribute AVG aggregates in the sampling check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvgMeasure {
    /// AVG of the predicate attribute itself.
    Attribute,
    /// AVG of a second attribute drawn `U(0, 1)` independently of the first.
    Independent,
}

impl FromStr for AvgMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "attribute" | "same" => Ok(AvgMeasure::Attribute),
            "independent" => Ok(AvgMeasure::Independent),
            _ => Err(Error::arg(format!("unknown AVG measure mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvgRow {
    pub trial: usize,
    pub n: usize,
    pub xi: f64,
    /// `sup_q |fbar_chi(q) - f_D(q)| / (|fbar_chi(q)| + 1)` over queries
    /// with expected match fraction at least `xi`.
    pub sup_err: f64,
}

/// Dataset for the AVG check. Depends on `(dist, n, mode, trial seed)` only,
/// so different `xi` see the same data.
fn avg_dataset(dist: &Dist, n: usize, mode: AvgMeasure, seed: u64) -> Result<Dataset> {
    let keys = dist.sample(n, rng::derive(seed, 0))?;
    match mode {
        AvgMeasure::Attribute => Ok(keys),
        AvgMeasure::Independent => {
            let m = gen_uniform(n, 1, rng::derive(seed, 1))?;
            let values: Vec<f64> = keys
                .rows()
                .zip(m.rows())
                .flat_map(|(k, v)| [k[0], v[0]])
                .collect();
            Dataset::from_normalized(values, 2, 1, NormParams::identity(2))
        }
    }
}

/// Sup relative AVG error over sampled queries in `Q_xi`.
pub fn avg_sampling_check(
    dist: &Dist,
    xi: f64,
    n_values: &[usize],
    trials: usize,
    queries: usize,
    mode: AvgMeasure,
    seed: u64,
) -> Result<Vec<AvgRow>> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::arg(format!(
            "xi = {xi} leaves Q_xi empty or unrestricted; need 0 < xi < 1"
        )));
    }
    if n_values.is_empty() || trials == 0 || queries == 0 {
        return Err(Error::arg("need data sizes, trials and queries"));
    }
    let max_draws = queries.saturating_mul(10_000);
    let mut rows = Vec::new();
    for trial in 0..trials {
        let trial_seed = rng::derive(seed, trial as u64);
        for (k, &n) in n_values.iter().enumerate() {
            let ds = avg_dataset(dist, n, mode, rng::derive(trial_seed, 2 * k as u64))?;
            let keys: Vec<f64> = ds.rows().map(|r| r[0]).collect();
            let measures: Vec<f64> = ds.rows().map(|r| r[ds.measure_index()]).collect();
            let sorted = SortedColumn::new(&keys, &measures);
            let mut sampler = range_sampler(rng::derive(trial_seed, 2 * k as u64 + 1));
            let (mut kept, mut draws, mut sup) = (0usize, 0usize, 0.0f64);
            while kept < queries {
                if draws == max_draws {
                    return Err(Error::arg(format!(
                        "Q_xi looks empty: no sampled query reached xi = {xi} in {draws} draws"
                    )));
                }
                draws += 1;
                let (c, r) = range_of(&sampler.sample());
                let mass = dist.mass(c, c + r);
                if mass < xi {
                    continue;
                }
                let count = sorted.count(c, r);
                if count == 0.0 {
                    continue;
                }
                kept += 1;
                let expected = match mode {
                    AvgMeasure::Attribute => dist.first_moment(c, c + r) / mass,
                    AvgMeasure::Independent => 0.5,
                };
                let observed = sorted.sum(c, r) / count;
                sup = sup.max((expected - observed).abs() / (expected.abs() + 1.0));
            }
            rows.push(AvgRow { trial, n, xi, sup_err: sup });
        }
    }
    Ok(rows)
}
