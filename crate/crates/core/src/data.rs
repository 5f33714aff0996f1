//! Datasets: normalized attribute tables, CSV ingestion, a binary cache and
//! the synthetic generators used by the experiments.
//!
//! Every stored value lies in `[0, 1]`. Ingested columns are mapped by their
//! extrema; constant columns map to `0`. Generated data is produced directly on
//! the unit cube, so its normalization is the identity.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

const CACHE_MAGIC: &[u8; 4] = b"NSDT";
const CACHE_VERSION: u16 = 1;

/// Give up on rejection sampling once fewer than this fraction of draws land
/// inside the unit cube.
const MIN_ACCEPTANCE: f64 = 1e-3;

/// Per-attribute `(min, max)` used to map raw values into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    bounds: Vec<(f64, f64)>,
}

impl NormParams {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return Err(Error::arg(format!(
                    "attribute {i}: invalid normalization bounds ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { bounds })
    }

    pub fn identity(dims: usize) -> Self {
        Self {
            bounds: vec![(0.0, 1.0); dims],
        }
    }

    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn normalize(&self, attr: usize, raw: f64) -> f64 {
        let (lo, hi) = self.bounds[attr];
        if hi > lo {
            (raw - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    /// Inverse of [`normalize`](Self::normalize). Constant attributes always
    /// map back to their single value.
    pub fn denormalize(&self, attr: usize, value: f64) -> f64 {
        let (lo, hi) = self.bounds[attr];
        if hi > lo {
            lo + value * (hi - lo)
        } else {
            lo
        }
    }
}

/// An `n × dims` table of normalized attributes with one measure attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    dims: usize,
    measure_index: usize,
    norm: NormParams,
}

impl Dataset {
    /// Builds a dataset from row-major values that are already normalized.
    pub fn from_normalized(
        values: Vec<f64>,
        dims: usize,
        measure_index: usize,
        norm: NormParams,
    ) -> Result<Self> {
        if dims == 0 {
            return Err(Error::arg("dataset needs at least one attribute"));
        }
        if values.is_empty() || !values.len().is_multiple_of(dims) {
            return Err(Error::arg(format!(
                "{} values do not form rows of {dims} attributes",
                values.len()
            )));
        }
        if measure_index >= dims {
            return Err(Error::arg(format!(
                "measure index {measure_index} out of range for {dims} attributes"
            )));
        }
        if norm.dims() != dims {
            return Err(Error::arg("normalization parameters do not match dims"));
        }
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg(format!(
                "value {} at row {}, column {} lies outside [0, 1]",
                values[pos],
                pos / dims,
                pos % dims
            )));
        }
        Ok(Self {
            n: values.len() / dims,
            values,
            dims,
            measure_index,
            norm,
        })
    }

    /// Normalizes raw rows by column extrema.
    pub fn from_raw_rows(rows: &[Vec<f64>], measure_index: usize) -> Result<Self> {
        let dims = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::arg("dataset needs at least one row"))?;
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); dims];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dims {
                return Err(Error::Ingest {
                    row: r,
                    column: row.len().min(dims),
                    message: format!("expected {dims} columns, found {}", row.len()),
                });
            }
            for (b, &v) in bounds.iter_mut().zip(row) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        let norm = NormParams::new(bounds)?;
        let mut values = Vec::with_capacity(rows.len() * dims);
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                // Rounding in (v - lo) / (hi - lo) can land a hair outside.
                values.push(norm.normalize(j, v).clamp(0.0, 1.0));
            }
        }
        Self::from_normalized(values, dims, measure_index, norm)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn measure_index(&self) -> usize {
        self.measure_index
    }

    pub fn norm_params(&self) -> &NormParams {
        &self.norm
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + Clone + '_ {
        self.values.chunks_exact(self.dims)
    }

    pub fn measure(&self, i: usize) -> f64 {
        self.values[i * self.dims + self.measure_index]
    }

    /// Same rows, different measure attribute.
    pub fn with_measure(mut self, measure_index: usize) -> Result<Self> {
        if measure_index >= self.dims {
            return Err(Error::arg(format!(
                "measure index {measure_index} out of range for {} attributes",
                self.dims
            )));
        }
        self.measure_index = measure_index;
        Ok(self)
    }

    /// Rows `indices`, keeping normalization and measure.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.dims);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_normalized(values, self.dims, self.measure_index, self.norm.clone())
    }

    pub fn denormalize_row(&self, i: usize) -> Vec<f64> {
        self.row(i)
            .iter()
            .enumerate()
            .map(|(j, &v)| self.norm.denormalize(j, v))
            .collect()
    }

    pub fn column_mean(&self, attr: usize) -> f64 {
        self.rows().map(|r| r[attr]).sum::<f64>() / self.n as f64
    }

    /// Bytes this table occupies in binary64, the accounting used for
    /// sample-based engines.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() * 8
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = u16::try_from(self.dims)
            .map_err(|_| Error::format("too many attributes for the cache format"))?;
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&dims.to_le_bytes())?;
        w.write_all(&(self.measure_index as u16).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a cache written by [`write_cache`](Self::write_cache). The cache
    /// holds normalized values only, so the result carries identity
    /// normalization.
    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = crate::codec::Cursor::new(&bytes);
        if cur.take(4)? != CACHE_MAGIC {
            return Err(Error::format("not a dataset cache (bad magic)"));
        }
        let version = cur.u16()?;
        if version != CACHE_VERSION {
            return Err(Error::format(format!("unsupported dataset cache version {version}")));
        }
        let n = cur.u64()? as usize;
        let dims = cur.u16()? as usize;
        let measure_index = cur.u16()? as usize;
        let total = n
            .checked_mul(dims)
            .ok_or_else(|| Error::format("dataset cache header overflows"))?;
        if cur.remaining() != total * 8 {
            return Err(Error::format(format!(
                "dataset cache payload is {} bytes, header implies {}",
                cur.remaining(),
                total * 8
            )));
        }
        let values = (0..total).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        Self::from_normalized(values, dims, measure_index, NormParams::identity(dims))
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_cache(std::io::BufWriter::new(file))
    }

    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_cache(std::fs::File::open(path)?)
    }
}

/// Reads a headed, comma-separated file of reals and normalizes each column.
pub fn load_csv(path: impl AsRef<Path>, measure_index: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, measure_index)
}

pub fn read_csv<R: Read>(input: R, measure_index: usize) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let width = reader
        .headers()
        .map_err(|e| Error::Ingest {
            row: 0,
            column: 0,
            message: e.to_string(),
        })?
        .len();
    if measure_index >= width {
        return Err(Error::arg(format!(
            "measure index {measure_index} out of range for {width} columns"
        )));
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // Data rows are numbered from 1; row 0 is the header.
        let row_no = r + 1;
        let record = record.map_err(|e| Error::Ingest {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(width);
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Ingest {
                row: row_no,
                column: c,
                message: format!("cannot parse {cell:?} as a real"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    row: row_no,
                    column: c,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Ingest {
            row: 1,
            column: 0,
            message: "no data rows".into(),
        });
    }
    Dataset::from_raw_rows(&rows, measure_index)
}

fn check_shape(n: usize, dims: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::arg("n must be at least 1"));
    }
    if dims == 0 {
        return Err(Error::arg("dims must be at least 1"));
    }
    Ok(())
}

/// `n` i.i.d. points uniform on `[0, 1]^dims`. The measure is the last attribute.
pub fn gen_uniform(n: usize, dims: usize, seed: u64) -> Result<Dataset> {
    check_shape(n, dims)?;
    let mut rng = rng::seeded(seed);
    let values = (0..n * dims).map(|_| rng.random::<f64>()).collect();
    Dataset::from_normalized(values, dims, dims - 1, NormParams::identity(dims))
}

/// One axis-aligned Gaussian component of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Component {
    pub fn isotropic(mean: Vec<f64>, sigma: f64) -> Self {
        let std = vec![sigma; mean.len()];
        Self { mean, std }
    }
}

/// Isotropic Gaussian samples truncated to the unit cube by rejection.
pub fn gen_gaussian(n: usize, dims: usize, mu: &[f64], sigma: f64, seed: u64) -> Result<Dataset> {
    check_shape(n, dims)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("sigma must be positive, got {sigma}")));
    }
    let mean = match mu.len() {
        1 => vec![mu[0]; dims],
        len if len == dims => mu.to_vec(),
        len => {
            return Err(Error::arg(format!(
                "mu has {len} entries, expected 1 or {dims}"
            )))
        }
    };
    gen_mixture(n, &[Component::isotropic(mean, sigma)], seed)
}

/// Gaussian mixture with `components` equally weighted components. Means are
/// uniform in the cube; each axis scale is drawn log-uniformly in
/// `[0.005, 0.05]`.
pub fn gen_gmm(n: usize, dims: usize, components: usize, seed: u64) -> Result<Dataset> {
    check_shape(n, dims)?;
    if components == 0 {
        return Err(Error::arg("a mixture needs at least one component"));
    }
    let mut rng = rng::seeded(rng::derive(seed, 0x6d6d));
    let (lo, hi) = (0.005f64.ln(), 0.05f64.ln());
    let comps: Vec<Component> = (0..components)
        .map(|_| Component {
            mean: (0..dims).map(|_| rng.random::<f64>()).collect(),
            std: (0..dims)
                .map(|_| (lo + (hi - lo) * rng.random::<f64>()).exp())
                .collect(),
        })
        .collect();
    gen_mixture(n, &comps, seed)
}

/// Equal-weight mixture of explicit components, truncated to the unit cube.
/// Rejected draws re-pick the component so the result follows the truncated
/// mixture density.
pub fn gen_mixture(n: usize, components: &[Component], seed: u64) -> Result<Dataset> {
    let dims = components
        .first()
        .map(|c| c.mean.len())
        .ok_or_else(|| Error::arg("a mixture needs at least one component"))?;
    check_shape(n, dims)?;
    for c in components {
        if c.mean.len() != dims || c.std.len() != dims {
            return Err(Error::arg("mixture components disagree on dimensionality"));
        }
        if c.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::arg("component scales must be positive"));
        }
    }
    let mut rng = rng::seeded(seed);
    let mut values = Vec::with_capacity(n * dims);
    let mut point = vec![0.0; dims];
    let mut attempts: u64 = 0;
    let mut accepted: u64 = 0;
    while (accepted as usize) < n {
        attempts += 1;
        let comp = &components[rng.random_range(0..components.len())];
        for (j, p) in point.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p = comp.mean[j] + comp.std[j] * z;
        }
        if point.iter().all(|v| (0.0..=1.0).contains(v)) {
            values.extend_from_slice(&point);
            accepted += 1;
        } else if attempts >= 100_000 && (accepted as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(Error::Generation(format!(
                "rejection sampling accepted {accepted} of {attempts} draws; \
                 the distribution barely overlaps the unit cube"
            )));
        }
    }
    Dataset::from_normalized(values, dims, dims - 1, NormParams::identity(dims))
}
