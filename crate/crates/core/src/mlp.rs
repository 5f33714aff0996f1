//! Fully connected ReLU regressor with hand-written backpropagation and Adam.
//!
//! Parameters live in one flat vector. Layer `l` occupies
//! `offsets[l] .. offsets[l] + fan_out * fan_in` for its row-major weights
//! (row = output unit) followed by `fan_out` biases.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::codec::{put_u16, Cursor};
use crate::error::{Error, Result};
use crate::query::TrainingSet;
use crate::rng;

/// Affine map between raw labels and the standardized training targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelScale {
    pub mean: f64,
    /// Zero disables division; targets are then only centered.
    pub std: f64,
}

impl LabelScale {
    pub const IDENTITY: LabelScale = LabelScale { mean: 0.0, std: 1.0 };

    pub fn from_labels(labels: &[f64]) -> Self {
        if labels.is_empty() {
            return Self::IDENTITY;
        }
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        // Spread below rounding noise of the mean counts as constant.
        let std = if std <= 1e-12 * (1.0 + mean.abs()) { 0.0 } else { std };
        Self { mean, std }
    }

    fn divisor(&self) -> f64 {
        if self.std > 0.0 {
            self.std
        } else {
            1.0
        }
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.mean) / self.divisor()
    }

    pub fn unscale(&self, z: f64) -> f64 {
        z * self.divisor() + self.mean
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of the training set held out for early stopping.
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 128,
            adam: AdamConfig::default(),
            max_epochs: 400,
            patience: 20,
            val_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network in standardized label space; apply `scale.unscale` to outputs.
    pub model: Mlp,
    pub scale: LabelScale,
    /// Validation MSE (standardized) per epoch; entry 0 is the initial model.
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    /// MSE of the returned model on the training split, in raw label units.
    pub train_mse: f64,
}

impl TrainOutcome {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.scale.unscale(self.model.forward(x))
    }
}

/// Adam moment accumulators shaped like the parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(params: usize, cfg: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
            cfg,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

impl Mlp {
    /// He-initialized network `[d, l_first, l_rest x (n_l - 2), 1]`.
    pub fn new(d: usize, n_l: usize, l_first: usize, l_rest: usize, seed: u64) -> Result<Self> {
        let dims = Self::layer_dims(d, n_l, l_first, l_rest)?;
        let mut m = Self::zeros(&dims)?;
        let mut g = rng::seeded(seed);
        for l in 0..m.layers() {
            let (fan_in, fan_out) = (m.dims[l], m.dims[l + 1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                .expect("positive standard deviation");
            let off = m.offsets[l];
            for w in &mut m.params[off..off + fan_in * fan_out] {
                *w = normal.sample(&mut g);
            }
        }
        Ok(m)
    }

    pub fn layer_dims(d: usize, n_l: usize, l_first: usize, l_rest: usize) -> Result<Vec<usize>> {
        if n_l < 2 {
            return Err(Error::arg(format!("depth {n_l} must be at least 2")));
        }
        if d == 0 || l_first == 0 || (n_l > 2 && l_rest == 0) {
            return Err(Error::arg("layer widths must be at least 1"));
        }
        let mut dims = vec![d, l_first];
        dims.extend(std::iter::repeat_n(l_rest, n_l - 2));
        dims.push(1);
        Ok(dims)
    }

    /// All-zero network with the given layer widths.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 1 {
            return Err(Error::arg(format!("invalid layer dims {dims:?}")));
        }
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut total = 0;
        for w in dims.windows(2) {
            offsets.push(total);
            total += (w[0] + 1) * w[1];
        }
        Ok(Self {
            dims: dims.to_vec(),
            offsets,
            params: vec![0.0; total],
        })
    }

    /// Builds a network from explicit per-layer `(weights, biases)`, weights
    /// row-major `fan_out x fan_in`.
    pub fn from_layers(dims: &[usize], layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        if layers.len() != m.layers() {
            return Err(Error::arg("layer count does not match dims"));
        }
        for (l, (w, b)) in layers.iter().enumerate() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            if w.len() != fan_in * fan_out || b.len() != fan_out {
                return Err(Error::arg(format!("layer {l} has mis-sized parameters")));
            }
            let off = m.offsets[l];
            m.params[off..off + w.len()].copy_from_slice(w);
            m.params[off + w.len()..off + w.len() + fan_out].copy_from_slice(b);
        }
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, layer: usize, out: usize, input: usize) -> f64 {
        self.params[self.offsets[layer] + out * self.dims[layer] + input]
    }

    pub fn bias(&self, layer: usize, out: usize) -> f64 {
        let fan_in = self.dims[layer];
        let fan_out = self.dims[layer + 1];
        self.params[self.offsets[layer] + fan_in * fan_out + out]
    }

    fn layer_slices(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
        let off = self.offsets[l];
        let (w, rest) = self.params[off..].split_at(fan_in * fan_out);
        (w, &rest[..fan_out])
    }

    fn max_width(&self) -> usize {
        *self.dims.iter().max().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut a = vec![0.0; self.max_width()];
        let mut b = vec![0.0; self.max_width()];
        self.forward_into(x, &mut a, &mut b)
    }

    fn forward_into(&self, x: &[f64], cur: &mut [f64], next: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dims[0]);
        cur[..x.len()].copy_from_slice(x);
        let (mut cur, mut next) = (cur, next);
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (w, bias) = self.layer_slices(l);
            for o in 0..fan_out {
                let z = bias[o] + dot(&w[o * fan_in..(o + 1) * fan_in], &cur[..fan_in]);
                next[o] = if l < last { relu(z) } else { z };
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Forward pass that also counts arithmetic operations, one per
    /// weight multiply-add and one per bias add.
    pub fn forward_counted(&self, x: &[f64]) -> (f64, usize) {
        let mut ops = 0usize;
        let mut cur = x.to_vec();
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (w, bias) = self.layer_slices(l);
            let mut next = vec![0.0; fan_out];
            for o in 0..fan_out {
                let mut z = bias[o];
                ops += 1;
                for i in 0..fan_in {
                    z += w[o * fan_in + i] * cur[i];
                    ops += 1;
                }
                next[o] = if l < last { relu(z) } else { z };
            }
            cur = next;
        }
        (cur[0], ops)
    }

    /// Gradient of `(1/|batch|) sum (f(x) - y)^2` with the batch loss.
    pub fn backward(&self, xs: &[&[f64]], ys: &[f64]) -> (Vec<f64>, f64) {
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::new(self);
        let loss = self.accumulate_grad(xs.iter().copied().zip(ys.iter().copied()), &mut grad, &mut ws);
        (grad, loss)
    }

    fn accumulate_grad<'a>(
        &self,
        batch: impl ExactSizeIterator<Item = (&'a [f64], f64)>,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let count = batch.len();
        if count == 0 {
            return 0.0;
        }
        let inv = 1.0 / count as f64;
        let layers = self.layers();
        let mut loss = 0.0;
        for (x, y) in batch {
            // Forward, keeping post-activation values per layer.
            ws.acts[0][..x.len()].copy_from_slice(x);
            for l in 0..layers {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let (w, bias) = self.layer_slices(l);
                let (lo, hi) = ws.acts.split_at_mut(l + 1);
                let input = &lo[l][..fan_in];
                let out = &mut hi[0][..fan_out];
                for o in 0..fan_out {
                    let z = bias[o] + dot(&w[o * fan_in..(o + 1) * fan_in], input);
                    out[o] = if l + 1 < layers { relu(z) } else { z };
                }
            }
            let err = ws.acts[layers][0] - y;
            loss += err * err;
            // Backward.
            ws.delta[0] = 2.0 * err * inv;
            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let off = self.offsets[l];
                let input = &ws.acts[l][..fan_in];
                let (gw, gb) = grad[off..off + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
                for o in 0..fan_out {
                    let d = ws.delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    axpy(d, input, &mut gw[o * fan_in..(o + 1) * fan_in]);
                }
                if l == 0 {
                    break;
                }
                let w = &self.params[off..off + fan_in * fan_out];
                let prev = &mut ws.prev[..fan_in];
                prev.iter_mut().for_each(|p| *p = 0.0);
                for o in 0..fan_out {
                    let d = ws.delta[o];
                    if d != 0.0 {
                        axpy(d, &w[o * fan_in..(o + 1) * fan_in], prev);
                    }
                }
                // ReLU derivative, zero at the kink.
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut ws.delta, &mut ws.prev);
            }
        }
        loss * inv
    }

    /// Mean squared error of `scale.unscale(f(x))` against raw labels.
    pub fn mse(&self, ts: &TrainingSet, scale: &LabelScale) -> f64 {
        if ts.is_empty() {
            return 0.0;
        }
        let mut ws = Workspace::new(self);
        let sum: f64 = ts
            .iter()
            .map(|(x, y)| {
                let p = scale.unscale(self.forward_into(x, &mut ws.acts[0], &mut ws.prev));
                (p - y).powi(2)
            })
            .sum();
        sum / ts.len() as f64
    }

    fn standardized_mse(&self, ts: &TrainingSet, scale: &LabelScale, ws: &mut Workspace) -> f64 {
        let (a, b) = ws.acts.split_at_mut(1);
        let sum: f64 = ts
            .iter()
            .map(|(x, y)| {
                let p = self.forward_into(x, &mut a[0], &mut b[0]);
                (p - scale.scale(y)).powi(2)
            })
            .sum();
        sum / ts.len() as f64
    }

    /// Rewrites the output layer so that the network computes
    /// `scale.scale(f(x))` instead of `f(x)`.
    pub fn to_standardized(&mut self, scale: &LabelScale) {
        let div = scale.divisor();
        let mean = scale.mean;
        self.map_output(|w| w / div, |b| (b - mean) / div);
    }

    /// Inverse of [`Mlp::to_standardized`].
    pub fn from_standardized(&mut self, scale: &LabelScale) {
        let div = scale.divisor();
        let mean = scale.mean;
        self.map_output(|w| w * div, |b| b * div + mean);
    }

    fn map_output(&mut self, fw: impl Fn(f64) -> f64, fb: impl Fn(f64) -> f64) {
        let l = self.layers() - 1;
        let fan_in = self.dims[l];
        let off = self.offsets[l];
        for w in &mut self.params[off..off + fan_in] {
            *w = fw(*w);
        }
        self.params[off + fan_in] = fb(self.params[off + fan_in]);
    }

    /// Rounds every parameter to the nearest binary32 value, matching what
    /// the weight blob stores.
    pub fn quantize_f32(&mut self) {
        for p in &mut self.params {
            *p = *p as f32 as f64;
        }
    }

    /// Byte length of [`Mlp::write_blob`]'s output.
    pub fn blob_len(&self) -> usize {
        2 + 2 * self.dims.len() + 4 * self.params.len()
    }

    pub fn blob_len_for(dims: &[usize]) -> usize {
        let params: usize = dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        2 + 2 * dims.len() + 4 * params
    }

    pub fn write_blob(&self, buf: &mut Vec<u8>) -> Result<()> {
        put_u16(buf, self.dims.len(), "layer count")?;
        for &w in &self.dims {
            put_u16(buf, w, "layer width")?;
        }
        for &p in &self.params {
            buf.extend_from_slice(&(p as f32).to_le_bytes());
        }
        Ok(())
    }

    pub(crate) fn read_blob(cur: &mut Cursor<'_>) -> Result<Self> {
        let count = cur.u16()? as usize;
        let dims = (0..count)
            .map(|_| cur.u16().map(usize::from))
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::zeros(&dims).map_err(|e| Error::format(e.to_string()))?;
        for p in &mut m.params {
            *p = cur.f32()? as f64;
        }
        Ok(m)
    }
}

struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    prev: Vec<f64>,
}

impl Workspace {
    fn new(m: &Mlp) -> Self {
        let w = m.max_width();
        Self {
            acts: m.dims.iter().map(|_| vec![0.0; w]).collect(),
            delta: vec![0.0; w],
            prev: vec![0.0; w],
        }
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four independent accumulators let the loop pipeline.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn split_for_training(ts: &TrainingSet, cfg: &TrainConfig) -> (TrainingSet, TrainingSet) {
    let (train, holdout) = ts.split(cfg.val_frac, rng::derive(cfg.seed, 1));
    if holdout.is_empty() || train.is_empty() {
        (ts.clone(), ts.clone())
    } else {
        (train, holdout)
    }
}

/// Label scale [`train_adam`] will derive for `ts` under `cfg`.
pub fn training_scale(ts: &TrainingSet, cfg: &TrainConfig) -> LabelScale {
    split_for_training(ts, cfg).0.label_scale()
}

/// Trains `init` (already in standardized label space) on `ts` with Adam,
/// mini-batches and validation early stopping; returns the best checkpoint.
/// The checkpoint is never worse on the validation split than predicting the
/// training mean.
pub fn train_adam(init: Mlp, ts: &TrainingSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if ts.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if ts.dim() != init.input_dim() {
        return Err(Error::Training(format!(
            "training queries have dimension {}, network expects {}",
            ts.dim(),
            init.input_dim()
        )));
    }
    if cfg.batch == 0 {
        return Err(Error::arg("batch size must be at least 1"));
    }
    let (train, val) = split_for_training(ts, cfg);
    let scale = train.label_scale();
    let targets: Vec<f64> = train.labels().iter().map(|&y| scale.scale(y)).collect();

    let mut model = init;
    let mut ws = Workspace::new(&model);
    let mut grad = vec![0.0; model.param_count()];
    let mut adam = AdamState::new(model.param_count(), cfg.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive(cfg.seed, 2));
    let batch = cfg.batch.min(train.len());

    let initial = model.standardized_mse(&val, &scale, &mut ws);
    if !initial.is_finite() {
        return Err(Error::Training("initial model produces non-finite loss".into()));
    }
    // The mean predictor (all-zero network in standardized space) competes
    // with the initialization as the epoch-0 checkpoint.
    let mean_mse = val.labels().iter().map(|&y| scale.scale(y).powi(2)).sum::<f64>() / val.len() as f64;
    let mut best = if mean_mse < initial {
        (mean_mse, 0usize, Mlp::zeros(model.dims())?)
    } else {
        (initial, 0usize, model.clone())
    };
    let mut history = vec![best.0];
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(batch) {
            let items = chunk.iter().map(|&i| (train.query(i), targets[i]));
            let loss = model.accumulate_grad(items, &mut grad, &mut ws);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}; learning rate {} may be too high",
                    cfg.adam.lr
                )));
            }
            adam.update(&mut model.params, &grad);
        }
        let v = model.standardized_mse(&val, &scale, &mut ws);
        if !v.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss at epoch {epoch}; learning rate {} may be too high",
                cfg.adam.lr
            )));
        }
        history.push(v);
        if v < best.0 {
            best = (v, epoch, model.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (best_val_mse, best_epoch, model) = best;
    let train_mse = model.mse(&train, &scale);
    Ok(TrainOutcome {
        model,
        scale,
        history,
        best_epoch,
        best_val_mse,
        train_mse,
    })
}
