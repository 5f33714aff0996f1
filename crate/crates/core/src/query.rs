//! Queries, predicate evaluation, the exact aggregation oracle and workload
//! sampling.
//!
//! An axis-range query is a pair of vectors `(c, r)` with `c_i + r_i <= 1`;
//! attribute `i` matches `c_i <= x_i < c_i + r_i`. The upper edge of the
//! domain is closed, so the inactive encoding `(0, 1)` matches every row
//! including those sitting exactly at `1.0`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;

use crate::codec::Cursor;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mlp::LabelScale;
use crate::rng::{self, Rng};

const TRAINING_MAGIC: &[u8; 4] = b"NSTQ";

/// Slack for `c_i + r_i <= 1` membership checks after float arithmetic.
const MEMBERSHIP_EPS: f64 = 1e-12;

/// Result of an aggregate over the matching rows; `None` is the EMPTY answer
/// of AVG/STD/MEDIAN over no rows.
pub type Answer = Option<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Aggregation {
    Count,
    Sum,
    Avg,
    Std,
    Median,
}

impl Aggregation {
    /// COUNT and SUM are defined (zero) on empty matches.
    pub fn defined_on_empty(self) -> bool {
        matches!(self, Aggregation::Count | Aggregation::Sum)
    }

    /// COUNT and SUM scale with the number of rows.
    pub fn is_additive(self) -> bool {
        self.defined_on_empty()
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Aggregation::Count => 0,
            Aggregation::Sum => 1,
            Aggregation::Avg => 2,
            Aggregation::Std => 3,
            Aggregation::Median => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Aggregation::Count,
            1 => Aggregation::Sum,
            2 => Aggregation::Avg,
            3 => Aggregation::Std,
            4 => Aggregation::Median,
            other => return Err(Error::format(format!("unknown aggregation code {other}"))),
        })
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Count => "count",
            Aggregation::Sum => "sum",
            Aggregation::Avg => "avg",
            Aggregation::Std => "std",
            Aggregation::Median => "median",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "count" => Aggregation::Count,
            "sum" => Aggregation::Sum,
            "avg" | "mean" => Aggregation::Avg,
            "std" | "stdev" => Aggregation::Std,
            "median" => Aggregation::Median,
            _ => return Err(Error::arg(format!("unknown aggregation {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredicateKind {
    AxisRange,
    RotatedRect,
}

impl PredicateKind {
    /// Length of the flattened query vector for a table of `dims` attributes.
    pub fn query_dims(self, dims: usize) -> usize {
        match self {
            PredicateKind::AxisRange => 2 * dims,
            PredicateKind::RotatedRect => 5,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            PredicateKind::AxisRange => 0,
            PredicateKind::RotatedRect => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PredicateKind::AxisRange),
            1 => Ok(PredicateKind::RotatedRect),
            other => Err(Error::format(format!("unknown predicate code {other}"))),
        }
    }
}

impl fmt::Display for PredicateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredicateKind::AxisRange => "axis",
            PredicateKind::RotatedRect => "rotated",
        })
    }
}

impl FromStr for PredicateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "axis" | "axis-range" | "range" => Ok(PredicateKind::AxisRange),
            "rotated" | "rotated-rect" | "rect" => Ok(PredicateKind::RotatedRect),
            _ => Err(Error::arg(format!("unknown predicate kind {s:?}"))),
        }
    }
}

/// The query function being modeled: aggregate, measure and predicate shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuerySpec {
    pub agg: Aggregation,
    pub measure_index: usize,
    pub predicate_kind: PredicateKind,
    /// Number of restricted attributes per sampled axis-range query.
    pub active_count: usize,
}

impl QuerySpec {
    pub fn axis(agg: Aggregation, measure_index: usize, active_count: usize) -> Self {
        Self {
            agg,
            measure_index,
            predicate_kind: PredicateKind::AxisRange,
            active_count,
        }
    }

    pub fn rotated(agg: Aggregation, measure_index: usize) -> Self {
        Self {
            agg,
            measure_index,
            predicate_kind: PredicateKind::RotatedRect,
            active_count: 2,
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.measure_index >= dims {
            return Err(Error::arg(format!(
                "measure index {} out of range for {dims} attributes",
                self.measure_index
            )));
        }
        match self.predicate_kind {
            PredicateKind::AxisRange => {
                if self.active_count == 0 || self.active_count > dims {
                    return Err(Error::arg(format!(
                        "active_count {} must lie in [1, {dims}]",
                        self.active_count
                    )));
                }
            }
            PredicateKind::RotatedRect => {
                if dims < 2 {
                    return Err(Error::arg("rotated rectangles need at least two attributes"));
                }
            }
        }
        Ok(())
    }

    pub fn query_dims(&self, dims: usize) -> usize {
        self.predicate_kind.query_dims(dims)
    }
}

/// Axis-aligned range `(c, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryInstance {
    pub c: Vec<f64>,
    pub r: Vec<f64>,
}

impl QueryInstance {
    pub fn new(c: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        let q = Self { c, r };
        q.validate()?;
        Ok(q)
    }

    /// The range matching every row.
    pub fn full(dims: usize) -> Self {
        Self {
            c: vec![0.0; dims],
            r: vec![1.0; dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.len() != self.r.len() || self.c.is_empty() {
            return Err(Error::arg("query bounds c and r must have equal, nonzero length"));
        }
        for (i, (&c, &r)) in self.c.iter().zip(&self.r).enumerate() {
            if !(c >= 0.0 && r >= 0.0 && c + r <= 1.0 + MEMBERSHIP_EPS) {
                return Err(Error::arg(format!(
                    "attribute {i}: (c={c}, r={r}) is outside the query domain"
                )));
            }
        }
        Ok(())
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.c[i] > 0.0 || self.c[i] + self.r[i] < 1.0
    }

    pub fn matches(&self, x: &[f64]) -> bool {
        self.c
            .iter()
            .zip(&self.r)
            .zip(x)
            .all(|((&c, &r), &v)| range_contains(c, r, v))
    }
}

#[inline]
fn range_contains(c: f64, r: f64, v: f64) -> bool {
    let hi = c + r;
    c <= v && (v < hi || hi >= 1.0)
}

/// Rectangle with opposite corners `p`, `p2`, rotated by `phi` about its
/// center, over the first two attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedRectQuery {
    pub p: [f64; 2],
    pub p2: [f64; 2],
    pub phi: f64,
}

impl RotatedRectQuery {
    pub fn new(p: [f64; 2], p2: [f64; 2], phi: f64) -> Result<Self> {
        let q = Self { p, p2, phi };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.p.iter().chain(&self.p2).all(|&v| in_unit(v)) {
            return Err(Error::arg("rectangle vertices must lie in [0, 1]^2"));
        }
        if !(0.0..FRAC_PI_2).contains(&self.phi) {
            return Err(Error::arg(format!("angle {} outside [0, pi/2)", self.phi)));
        }
        Ok(())
    }

    fn frame(&self) -> RotatedFrame {
        let center = [
            0.5 * (self.p[0] + self.p2[0]),
            0.5 * (self.p[1] + self.p2[1]),
        ];
        let (sin, cos) = self.phi.sin_cos();
        let frame = RotatedFrame {
            center,
            cos,
            sin,
            lo: [0.0; 2],
            hi: [0.0; 2],
        };
        let a = frame.derotate(self.p);
        let b = frame.derotate(self.p2);
        RotatedFrame {
            lo: [a[0].min(b[0]), a[1].min(b[1])],
            hi: [a[0].max(b[0]), a[1].max(b[1])],
            ..frame
        }
    }

    pub fn matches(&self, x: &[f64]) -> bool {
        self.frame().contains(x)
    }
}

#[derive(Debug, Clone, Copy)]
struct RotatedFrame {
    center: [f64; 2],
    cos: f64,
    sin: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl RotatedFrame {
    fn derotate(&self, v: [f64; 2]) -> [f64; 2] {
        let dx = v[0] - self.center[0];
        let dy = v[1] - self.center[1];
        [
            self.cos * dx + self.sin * dy,
            -self.sin * dx + self.cos * dy,
        ]
    }

    fn contains(&self, x: &[f64]) -> bool {
        let v = self.derotate([x[0], x[1]]);
        (0..2).all(|k| self.lo[k] <= v[k] && v[k] < self.hi[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Axis(QueryInstance),
    Rotated(RotatedRectQuery),
}

impl Query {
    pub fn kind(&self) -> PredicateKind {
        match self {
            Query::Axis(_) => PredicateKind::AxisRange,
            Query::Rotated(_) => PredicateKind::RotatedRect,
        }
    }

    /// Flattened network input: `(c_1..c_d, r_1..r_d)` or `(px, py, px', py', phi)`.
    pub fn to_vector(&self) -> Vec<f64> {
        match self {
            Query::Axis(q) => q.c.iter().chain(&q.r).copied().collect(),
            Query::Rotated(q) => vec![q.p[0], q.p[1], q.p2[0], q.p2[1], q.phi],
        }
    }

    pub fn from_vector(kind: PredicateKind, v: &[f64]) -> Result<Self> {
        match kind {
            PredicateKind::AxisRange => {
                if !v.len().is_multiple_of(2) || v.is_empty() {
                    return Err(Error::arg(format!(
                        "axis-range query vector has odd length {}",
                        v.len()
                    )));
                }
                let half = v.len() / 2;
                Ok(Query::Axis(QueryInstance::new(
                    v[..half].to_vec(),
                    v[half..].to_vec(),
                )?))
            }
            PredicateKind::RotatedRect => {
                if v.len() != 5 {
                    return Err(Error::arg(format!(
                        "rotated-rectangle query vector has length {}, expected 5",
                        v.len()
                    )));
                }
                Ok(Query::Rotated(RotatedRectQuery::new(
                    [v[0], v[1]],
                    [v[2], v[3]],
                    v[4],
                )?))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Query::Axis(q) => q.validate(),
            Query::Rotated(q) => q.validate(),
        }
    }

    fn compile(&self) -> Predicate {
        match self {
            Query::Axis(q) => Predicate::Axis(
                (0..q.dims())
                    .filter(|&i| q.is_active(i))
                    .map(|i| (i, q.c[i], q.r[i]))
                    .collect(),
            ),
            Query::Rotated(q) => Predicate::Rotated(q.frame()),
        }
    }

    fn check_dims(&self, dims: usize) -> Result<()> {
        match self {
            Query::Axis(q) if q.dims() != dims => Err(Error::arg(format!(
                "query has {} attributes, dataset has {dims}",
                q.dims()
            ))),
            Query::Rotated(_) if dims < 2 => {
                Err(Error::arg("rotated rectangles need at least two attributes"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Query {
    /// Query-file line: `c1,..,cd;r1,..,rd` or `px,py;px',py';phi`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(f: &mut fmt::Formatter<'_>, xs: &[f64]) -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        }
        match self {
            Query::Axis(q) => {
                join(f, &q.c)?;
                f.write_str(";")?;
                join(f, &q.r)
            }
            Query::Rotated(q) => {
                join(f, &q.p)?;
                f.write_str(";")?;
                join(f, &q.p2)?;
                write!(f, ";{}", q.phi)
            }
        }
    }
}

impl FromStr for Query {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let parse_list = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::arg(format!("cannot parse {t:?} in query line")))
                })
                .collect()
        };
        let parts: Vec<&str> = line.trim().split(';').collect();
        match parts.as_slice() {
            [c, r] => Ok(Query::Axis(QueryInstance::new(parse_list(c)?, parse_list(r)?)?)),
            [p, p2, phi] => {
                let (p, p2) = (parse_list(p)?, parse_list(p2)?);
                if p.len() != 2 || p2.len() != 2 {
                    return Err(Error::arg("rectangle vertices need two coordinates each"));
                }
                let phi = phi
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::arg(format!("cannot parse angle {phi:?}")))?;
                Ok(Query::Rotated(RotatedRectQuery::new([p[0], p[1]], [p2[0], p2[1]], phi)?))
            }
            _ => Err(Error::arg(format!("malformed query line {line:?}"))),
        }
    }
}

enum Predicate {
    Axis(Vec<(usize, f64, f64)>),
    Rotated(RotatedFrame),
}

impl Predicate {
    #[inline]
    fn matches(&self, x: &[f64]) -> bool {
        match self {
            Predicate::Axis(active) => active
                .iter()
                .all(|&(i, c, r)| range_contains(c, r, x[i])),
            Predicate::Rotated(frame) => frame.contains(x),
        }
    }
}

/// Whether row `x` satisfies query `q`.
pub fn predicate_eval(q: &Query, x: &[f64]) -> bool {
    match q {
        Query::Axis(q) => q.matches(x),
        Query::Rotated(q) => q.matches(x),
    }
}

/// Exact answer by a full scan.
pub fn oracle_answer(ds: &Dataset, q: &Query, spec: &QuerySpec) -> Result<Answer> {
    spec.validate(ds.dims())?;
    if q.kind() != spec.predicate_kind {
        return Err(Error::arg("query kind does not match the query spec"));
    }
    q.check_dims(ds.dims())?;
    Ok(scan(ds, &q.compile(), spec.agg, spec.measure_index))
}

/// Aggregate over rows of `ds` selected by `q`, with no consistency checks.
pub(crate) fn scan_query(ds: &Dataset, q: &Query, agg: Aggregation, measure: usize) -> Answer {
    scan(ds, &q.compile(), agg, measure)
}

fn scan(ds: &Dataset, pred: &Predicate, agg: Aggregation, measure: usize) -> Answer {
    let matched = ds.rows().filter(|row| pred.matches(row)).map(|row| row[measure]);
    aggregate(agg, matched)
}

/// Applies `agg` to a stream of measure values.
pub fn aggregate(agg: Aggregation, values: impl Iterator<Item = f64>) -> Answer {
    match agg {
        Aggregation::Count => Some(values.count() as f64),
        Aggregation::Sum => Some(values.sum()),
        Aggregation::Avg => {
            let (mut n, mut sum) = (0usize, 0.0);
            for v in values {
                n += 1;
                sum += v;
            }
            (n > 0).then(|| sum / n as f64)
        }
        Aggregation::Std => {
            // Welford; population variance.
            let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
            for v in values {
                n += 1;
                let delta = v - mean;
                mean += delta / n as f64;
                m2 += delta * (v - mean);
            }
            (n > 0).then(|| (m2 / n as f64).max(0.0).sqrt())
        }
        Aggregation::Median => {
            let mut xs: Vec<f64> = values.collect();
            if xs.is_empty() {
                return None;
            }
            let m = xs.len();
            let upper = m / 2;
            let (_, hi, _) = xs.select_nth_unstable_by(upper, f64::total_cmp);
            let hi = *hi;
            if m % 2 == 1 {
                Some(hi)
            } else {
                let lo = xs[..upper].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some(0.5 * (lo + hi))
            }
        }
    }
}

/// How range widths are drawn for active attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeMode {
    /// `c ~ U(0, 1)`, then `r ~ U(0, 1 - c)`.
    Uniform,
    /// `r = frac`, `c ~ U(0, 1 - frac)`.
    Fixed(f64),
}

impl FromStr for RangeMode {
    type Err = Error;

    /// `uniform` or `fixed:<frac>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "uniform" {
            return Ok(RangeMode::Uniform);
        }
        if let Some(frac) = s.strip_prefix("fixed:") {
            let frac: f64 = frac
                .parse()
                .map_err(|_| Error::arg(format!("bad range fraction {frac:?}")))?;
            return Ok(RangeMode::Fixed(frac));
        }
        Err(Error::arg(format!("unknown range mode {s:?}")))
    }
}

/// Stateful workload sampler; successive calls continue one seeded stream.
pub struct QuerySampler {
    spec: QuerySpec,
    dims: usize,
    mode: RangeMode,
    rng: Rng,
}

impl QuerySampler {
    pub fn new(spec: QuerySpec, dims: usize, mode: RangeMode, seed: u64) -> Result<Self> {
        spec.validate(dims)?;
        if let RangeMode::Fixed(frac) = mode {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::arg(format!("range fraction {frac} outside (0, 1]")));
            }
        }
        Ok(Self {
            spec,
            dims,
            mode,
            rng: rng::seeded(seed),
        })
    }

    pub fn spec(&self) -> &QuerySpec {
        &self.spec
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    fn range(&mut self) -> (f64, f64) {
        match self.mode {
            RangeMode::Uniform => {
                let c: f64 = self.rng.random();
                let r = self.rng.random::<f64>() * (1.0 - c);
                (c, r)
            }
            RangeMode::Fixed(frac) => {
                let c = self.rng.random::<f64>() * (1.0 - frac);
                (c, frac)
            }
        }
    }

    pub fn sample(&mut self) -> Query {
        match self.spec.predicate_kind {
            PredicateKind::AxisRange => {
                let mut q = QueryInstance::full(self.dims);
                let active = index::sample(&mut self.rng, self.dims, self.spec.active_count);
                for i in active.iter() {
                    let (c, r) = self.range();
                    q.c[i] = c;
                    q.r[i] = r;
                }
                Query::Axis(q)
            }
            PredicateKind::RotatedRect => {
                let mut unit = || self.rng.random::<f64>();
                let p = [unit(), unit()];
                let p2 = [unit(), unit()];
                let phi = self.rng.random::<f64>() * FRAC_PI_2;
                Query::Rotated(RotatedRectQuery { p, p2, phi })
            }
        }
    }

    pub fn take(&mut self, count: usize) -> Vec<Query> {
        (0..count).map(|_| self.sample()).collect()
    }
}

/// `count` queries drawn from the workload model, deterministic in `seed`.
pub fn sample_queries(
    spec: &QuerySpec,
    dims: usize,
    count: usize,
    seed: u64,
    mode: RangeMode,
) -> Result<Vec<Query>> {
    if count == 0 {
        return Err(Error::arg("count must be at least 1"));
    }
    Ok(QuerySampler::new(*spec, dims, mode, seed)?.take(count))
}

/// Labeled queries: flattened query vectors with exact answers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    d: usize,
    queries: Vec<f64>,
    labels: Vec<f64>,
}

impl TrainingSet {
    pub fn new(d: usize, queries: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        if d == 0 || queries.len() != d * labels.len() {
            return Err(Error::arg(format!(
                "{} query values do not match {} labels of dimension {d}",
                queries.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|l| !l.is_finite()) {
            return Err(Error::arg("training labels must be finite"));
        }
        Ok(Self { d, queries, labels })
    }

    pub fn from_pairs(d: usize, pairs: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Result<Self> {
        let mut queries = Vec::new();
        let mut labels = Vec::new();
        for (q, y) in pairs {
            if q.len() != d {
                return Err(Error::arg("query vector has the wrong dimension"));
            }
            queries.extend(q);
            labels.push(y);
        }
        Self::new(d, queries, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Query-vector dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn query(&self, i: usize) -> &[f64] {
        &self.queries[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.queries
            .chunks_exact(self.d)
            .zip(self.labels.iter().copied())
    }

    pub fn label_scale(&self) -> LabelScale {
        LabelScale::from_labels(&self.labels)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut queries = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            queries.extend_from_slice(self.query(i));
            labels.push(self.labels[i]);
        }
        Self {
            d: self.d,
            queries,
            labels,
        }
    }

    /// Deterministic split into `(first, second)` where the second part holds
    /// `round(frac * len)` entries chosen by `seed`.
    pub fn split(&self, frac: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng::seeded(seed));
        let held = ((self.len() as f64) * frac).round() as usize;
        let (second, first) = idx.split_at(held.min(self.len()));
        let (mut first, mut second) = (first.to_vec(), second.to_vec());
        first.sort_unstable();
        second.sort_unstable();
        (self.subset(&first), self.subset(&second))
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(14 + self.queries.len() * 8 + self.labels.len() * 8);
        buf.extend_from_slice(TRAINING_MAGIC);
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        crate::codec::put_u16(&mut buf, self.d, "query dimension")?;
        for (q, y) in self.iter() {
            for v in q {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&y.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor::new(&bytes);
        if cur.take(4)? != TRAINING_MAGIC {
            return Err(Error::format("not a training-set cache (bad magic)"));
        }
        let count = cur.u64()? as usize;
        let d = cur.u16()? as usize;
        let expected = count
            .checked_mul((d + 1) * 8)
            .ok_or_else(|| Error::format("training-set header overflows"))?;
        if cur.remaining() != expected {
            return Err(Error::format(format!(
                "training-set payload is {} bytes, header implies {expected}",
                cur.remaining()
            )));
        }
        let mut queries = Vec::with_capacity(count * d);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            for _ in 0..d {
                queries.push(cur.f64()?);
            }
            labels.push(cur.f64()?);
        }
        Self::new(d, queries, labels).map_err(|e| Error::format(e.to_string()))
    }
}

/// Labels every query by the oracle, preserving order.
pub fn label_queries(ds: &Dataset, queries: &[Query], spec: &QuerySpec) -> Result<Vec<Answer>> {
    spec.validate(ds.dims())?;
    for q in queries {
        if q.kind() != spec.predicate_kind {
            return Err(Error::arg("query kind does not match the query spec"));
        }
        q.check_dims(ds.dims())?;
    }
    Ok(queries
        .par_iter()
        .map(|q| scan_query(ds, q, spec.agg, spec.measure_index))
        .collect())
}

/// Labels `queries`; EMPTY answers are dropped and replaced with fresh draws
/// from `sampler` until the requested count is reached or ten times that many
/// queries have been evaluated.
pub fn build_training_set(
    ds: &Dataset,
    queries: Vec<Query>,
    spec: &QuerySpec,
    sampler: &mut QuerySampler,
) -> Result<TrainingSet> {
    let target = queries.len();
    if target == 0 {
        return Err(Error::TrainingSet("no queries to label".into()));
    }
    let d = spec.query_dims(ds.dims());
    let cap = target.saturating_mul(10);
    let mut pending = queries;
    let mut evaluated = 0usize;
    let mut qs = Vec::with_capacity(target * d);
    let mut labels = Vec::with_capacity(target);
    while !pending.is_empty() {
        evaluated += pending.len();
        let answers = label_queries(ds, &pending, spec)?;
        for (q, a) in pending.iter().zip(answers) {
            if let Some(y) = a {
                qs.extend(q.to_vector());
                labels.push(y);
            }
        }
        let missing = target - labels.len();
        if missing == 0 {
            break;
        }
        let budget = cap.saturating_sub(evaluated);
        if budget == 0 {
            return Err(Error::TrainingSet(format!(
                "only {} of {evaluated} sampled queries matched any row \
                 (match rate {:.4}); needed {target}",
                labels.len(),
                labels.len() as f64 / evaluated as f64
            )));
        }
        pending = sampler.take(missing.min(budget));
    }
    TrainingSet::new(d, qs, labels)
}

/// Samples and labels `count` queries against `ds`.
pub fn sample_training_set(
    ds: &Dataset,
    spec: &QuerySpec,
    count: usize,
    mode: RangeMode,
    seed: u64,
) -> Result<TrainingSet> {
    let mut sampler = QuerySampler::new(*spec, ds.dims(), mode, seed)?;
    let queries = sampler.take(count);
    build_training_set(ds, queries, spec, &mut sampler)
}

pub fn write_query_file<W: Write>(mut w: W, queries: &[Query]) -> Result<()> {
    for q in queries {
        writeln!(w, "{q}")?;
    }
    Ok(())
}

/// Parses a query file, skipping blank lines.
pub fn read_query_file<R: BufRead>(r: R) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            line.parse::<Query>()
                .map_err(|e| Error::arg(format!("query file line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_uniform, NormParams};
    use proptest::prelude::*;

    fn one_d(points: &[f64]) -> Dataset {
        Dataset::from_normalized(points.to_vec(), 1, 0, NormParams::identity(1)).unwrap()
    }

    fn axis(c: &[f64], r: &[f64]) -> Query {
        Query::Axis(QueryInstance::new(c.to_vec(), r.to_vec()).unwrap())
    }

    #[test]
    fn full_range_matches_everything() {
        let q = Query::Axis(QueryInstance::full(3));
        assert!(predicate_eval(&q, &[0.0, 0.5, 1.0]));
        assert!(predicate_eval(&q, &[1.0, 1.0, 1.0]));
    }

    #[test]
    fn upper_bound_is_exclusive() {
        let q = axis(&[0.2], &[0.3]);
        assert!(!predicate_eval(&q, &[0.5]));
        assert!(predicate_eval(&q, &[0.2]));
        assert!(predicate_eval(&q, &[0.4999]));
    }

    #[test]
    fn unrotated_rectangle_is_a_box() {
        let q = Query::Rotated(RotatedRectQuery::new([0.1, 0.1], [0.4, 0.4], 0.0).unwrap());
        assert!(predicate_eval(&q, &[0.2, 0.3]));
        assert!(!predicate_eval(&q, &[0.5, 0.3]));
    }

    #[test]
    fn rotated_rectangle_quarter_turn_region() {
        // Diagonal (0.3,0.5)-(0.7,0.5) at 45 degrees spans the diamond with
        // the other two corners at (0.5,0.3) and (0.5,0.7).
        let q = RotatedRectQuery::new([0.3, 0.5], [0.7, 0.5], std::f64::consts::FRAC_PI_4)
            .unwrap();
        assert!(q.matches(&[0.5, 0.5]));
        assert!(q.matches(&[0.45, 0.45]));
        assert!(q.matches(&[0.45, 0.55]));
        assert!(q.matches(&[0.5, 0.32]));
        assert!(!q.matches(&[0.35, 0.35]));
        assert!(!q.matches(&[0.62, 0.62]));
        assert!(!q.matches(&[0.3, 0.3]));
    }

    #[test]
    fn oracle_count_brute_force() {
        let ds = one_d(&[0.1, 0.5, 0.9]);
        let spec = QuerySpec::axis(Aggregation::Count, 0, 1);
        assert_eq!(oracle_answer(&ds, &axis(&[0.0], &[0.6]), &spec).unwrap(), Some(2.0));
    }

    #[test]
    fn oracle_full_range_identities() {
        let ds = gen_uniform(1_000, 2, 7).unwrap();
        let full = Query::Axis(QueryInstance::full(2));
        let count = QuerySpec::axis(Aggregation::Count, 1, 1);
        assert_eq!(oracle_answer(&ds, &full, &count).unwrap(), Some(1_000.0));
        let avg = QuerySpec::axis(Aggregation::Avg, 1, 1);
        let mean = ds.column_mean(1);
        let got = oracle_answer(&ds, &full, &avg).unwrap().unwrap();
        assert!((got - mean).abs() < 1e-12);
    }

    #[test]
    fn median_even_count_averages_middles() {
        let got = aggregate(Aggregation::Median, [9.0, 1.0, 5.0, 3.0].into_iter());
        assert_eq!(got, Some(4.0));
        assert_eq!(aggregate(Aggregation::Median, [2.0, 7.0, 1.0].into_iter()), Some(2.0));
    }

    #[test]
    fn population_std() {
        let got = aggregate(Aggregation::Std, [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0].into_iter());
        assert!((got.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_match_semantics() {
        let ds = one_d(&[0.9]);
        let q = axis(&[0.0], &[0.1]);
        for agg in [Aggregation::Count, Aggregation::Sum] {
            let spec = QuerySpec::axis(agg, 0, 1);
            assert_eq!(oracle_answer(&ds, &q, &spec).unwrap(), Some(0.0));
        }
        for agg in [Aggregation::Avg, Aggregation::Std, Aggregation::Median] {
            let spec = QuerySpec::axis(agg, 0, 1);
            assert_eq!(oracle_answer(&ds, &q, &spec).unwrap(), None);
        }
    }

    #[test]
    fn fixed_range_sampling_shape() {
        let spec = QuerySpec::axis(Aggregation::Avg, 0, 1);
        let qs = sample_queries(&spec, 13, 200, 3, RangeMode::Fixed(0.05)).unwrap();
        for q in &qs {
            let Query::Axis(q) = q else { unreachable!() };
            let restricted = (0..13).filter(|&i| q.r[i] == 0.05).count();
            let full = (0..13).filter(|&i| q.c[i] == 0.0 && q.r[i] == 1.0).count();
            assert_eq!((restricted, full), (1, 12));
        }
        assert_eq!(qs, sample_queries(&spec, 13, 200, 3, RangeMode::Fixed(0.05)).unwrap());
    }

    #[test]
    fn too_many_active_attributes() {
        let spec = QuerySpec::axis(Aggregation::Count, 0, 4);
        assert!(matches!(
            sample_queries(&spec, 3, 10, 0, RangeMode::Uniform),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn count_training_set_never_discards() {
        let ds = gen_uniform(200, 2, 1).unwrap();
        let spec = QuerySpec::axis(Aggregation::Count, 0, 2);
        let ts = sample_training_set(&ds, &spec, 300, RangeMode::Uniform, 9).unwrap();
        assert_eq!(ts.len(), 300);
        let plain = sample_queries(&spec, 2, 300, 9, RangeMode::Uniform).unwrap();
        for (i, q) in plain.iter().enumerate() {
            assert_eq!(ts.query(i), q.to_vector().as_slice());
        }
    }

    #[test]
    fn avg_training_set_has_no_empty_labels() {
        // Sparse data: most small ranges match nothing.
        let ds = gen_uniform(20, 2, 4).unwrap();
        let spec = QuerySpec::axis(Aggregation::Avg, 1, 2);
        let ts = sample_training_set(&ds, &spec, 100, RangeMode::Fixed(0.2), 5).unwrap();
        assert_eq!(ts.len(), 100);
        for (q, y) in ts.iter() {
            let q = Query::from_vector(PredicateKind::AxisRange, q).unwrap();
            assert_eq!(oracle_answer(&ds, &q, &spec).unwrap(), Some(y));
        }
    }

    #[test]
    fn retry_cap_reports_match_rate() {
        let ds = one_d(&[0.999]);
        let spec = QuerySpec::axis(Aggregation::Avg, 0, 1);
        let err = sample_training_set(&ds, &spec, 50, RangeMode::Fixed(0.01), 1).unwrap_err();
        assert!(matches!(err, Error::TrainingSet(ref m) if m.contains("match rate")), "{err}");
    }

    #[test]
    fn query_file_round_trip() {
        let spec = QuerySpec::axis(Aggregation::Count, 0, 2);
        let mut qs = sample_queries(&spec, 3, 20, 2, RangeMode::Uniform).unwrap();
        qs.extend(sample_queries(&QuerySpec::rotated(Aggregation::Avg, 0), 2, 5, 2, RangeMode::Uniform).unwrap());
        let mut buf = Vec::new();
        write_query_file(&mut buf, &qs).unwrap();
        let back = read_query_file(buf.as_slice()).unwrap();
        assert_eq!(back, qs);
        assert!("0.5;0.6".parse::<Query>().is_err());
        assert!("0.1,0.2;0.3".parse::<Query>().is_err());
    }

    #[test]
    fn training_cache_round_trip() {
        let ts = TrainingSet::from_pairs(2, vec![(vec![0.1, 0.2], 3.0), (vec![0.3, 0.4], -1.5)])
            .unwrap();
        let mut buf = Vec::new();
        ts.write_cache(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"NSTQ");
        assert_eq!(buf.len(), 4 + 8 + 2 + 2 * 3 * 8);
        assert_eq!(TrainingSet::read_cache(buf.as_slice()).unwrap(), ts);
        assert!(TrainingSet::read_cache(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn uniform_count_tracks_range_width() {
        let n = 1_000_000;
        let ds = gen_uniform(n, 1, 17).unwrap();
        let spec = QuerySpec::axis(Aggregation::Count, 0, 1);
        let qs = sample_queries(&spec, 1, 1_000, 18, RangeMode::Uniform).unwrap();
        let answers = label_queries(&ds, &qs, &spec).unwrap();
        let worst = qs
            .iter()
            .zip(answers)
            .map(|(q, a)| {
                let Query::Axis(q) = q else { unreachable!() };
                (a.unwrap() / n as f64 - q.r[0]).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.005, "max deviation {worst}");
    }

    proptest! {
        #[test]
        fn sampled_queries_are_in_domain(seed in 0u64..1000, dims in 1usize..6, frac in 0.01f64..1.0) {
            let active = 1 + (seed as usize % dims);
            let spec = QuerySpec::axis(Aggregation::Count, 0, active);
            for mode in [RangeMode::Uniform, RangeMode::Fixed(frac)] {
                for q in sample_queries(&spec, dims, 20, seed, mode).unwrap() {
                    prop_assert!(q.validate().is_ok());
                }
            }
        }

        #[test]
        fn count_monotone_in_range(c in 0.0f64..0.9, r in 0.0f64..0.1, grow in 0.0f64..1.0, seed in 0u64..50) {
            let ds = gen_uniform(300, 1, seed).unwrap();
            let spec = QuerySpec::axis(Aggregation::Count, 0, 1);
            let wider = r + grow * (1.0 - c - r);
            let a = oracle_answer(&ds, &axis(&[c], &[r]), &spec).unwrap().unwrap();
            let b = oracle_answer(&ds, &axis(&[c], &[wider]), &spec).unwrap().unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn disjoint_ranges_add(c in 0.0f64..0.5, w1 in 0.0f64..0.25, w2 in 0.0f64..0.25, seed in 0u64..50) {
            let ds = gen_uniform(300, 1, seed).unwrap();
            let left = axis(&[c], &[w1]);
            // c + w1 is the exact split point shared by both pieces.
            let mid = c + w1;
            let right = axis(&[mid], &[w2]);
            let whole = Query::Axis(QueryInstance { c: vec![c], r: vec![mid + w2 - c] });
            for agg in [Aggregation::Count, Aggregation::Sum] {
                let spec = QuerySpec::axis(agg, 0, 1);
                let a = oracle_answer(&ds, &left, &spec).unwrap().unwrap();
                let b = oracle_answer(&ds, &right, &spec).unwrap().unwrap();
                // Direct scan against the same half-open edges.
                let hi = mid + w2;
                let expect = aggregate(agg, ds.rows().map(|r| r[0]).filter(|&x| c <= x && x < hi)).unwrap();
                let split = aggregate(agg, ds.rows().map(|r| r[0]).filter(|&x| (c <= x && x < mid) || (mid <= x && x < hi))).unwrap();
                prop_assert!((a + b - split).abs() < 1e-9);
                let w = oracle_answer(&ds, &whole, &spec).unwrap().unwrap();
                prop_assert!((w - expect).abs() < 1e-9);
            }
        }

        #[test]
        fn zero_angle_rectangle_equals_axis_box(
            p in prop::array::uniform2(0.0f64..1.0),
            p2 in prop::array::uniform2(0.0f64..1.0),
            x in prop::array::uniform2(0.0f64..1.0),
        ) {
            let rect = RotatedRectQuery { p, p2, phi: 0.0 };
            let lo = [p[0].min(p2[0]), p[1].min(p2[1])];
            let hi = [p[0].max(p2[0]), p[1].max(p2[1])];
            let boxed = (0..2).all(|k| lo[k] <= x[k] && x[k] < hi[k]);
            prop_assert_eq!(rect.matches(&x), boxed);
        }
    }
}
