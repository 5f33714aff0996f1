//! Memorizing ReLU network built from g-units on a uniform grid.
//!
//! With grid resolution `t` there are `k = (t+1)^d` vertices `pi^i / t`,
//! enumerated by the base-(t+1) digits of `i`. Unit `i >= 1` is
//!
//! ```text
//! g_i(x) = a_i * relu( sum_r -M * relu(-x_r + pi^i_r / t) + 1/t )
//! ```
//!
//! and the network is `b + sum_i g_i(x)`.

use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mlp::{train_adam, Mlp, TrainConfig, TrainOutcome};
use crate::query::TrainingSet;
use crate::rng;

/// Default construction limits; `k = (t+1)^d` grows fast.
pub const DEFAULT_MAX_DIM: usize = 4;
pub const DEFAULT_MAX_T: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Large `M`, targeting the mean absolute error bound.
    L1,
    /// `M = 1`, targeting the sup-norm bound; only for `d <= 3`.
    Linf,
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(NormMode::L1),
            "linf" | "l-inf" | "inf" => Ok(NormMode::Linf),
            _ => Err(Error::arg(format!("unknown norm mode {s:?}"))),
        }
    }
}

/// Digits of `i` in base `t+1`, most significant first, padded to `d`.
pub fn base_rep(i: usize, t: usize, d: usize) -> Result<Vec<usize>> {
    let base = t + 1;
    let k = vertex_count(t, d)?;
    if i >= k {
        return Err(Error::arg(format!("index {i} >= (t+1)^d = {k}")));
    }
    let mut digits = vec![0; d];
    let mut rest = i;
    for slot in digits.iter_mut().rev() {
        *slot = rest % base;
        rest /= base;
    }
    Ok(digits)
}

pub fn vertex_count(t: usize, d: usize) -> Result<usize> {
    if t == 0 {
        return Err(Error::arg("grid resolution t must be at least 1"));
    }
    (t + 1)
        .checked_pow(d as u32)
        .ok_or_else(|| Error::arg(format!("(t+1)^d overflows for t={t}, d={d}")))
}

/// Second-layer weight magnitude.
///
/// L1: `M = 1 / (1 - (1 - 1/(k d^2 2^(d-1)))^(1/d))`, evaluated through
/// `log1p`/`expm1` so tiny `1/(k d^2 2^(d-1))` does not cancel.
#[allow(non_snake_case)]
pub fn compute_M(k: usize, d: usize, mode: NormMode) -> Result<f64> {
    if d == 0 || k == 0 {
        return Err(Error::arg("k and d must be positive"));
    }
    match mode {
        NormMode::Linf if d > 3 => Err(Error::arg(format!(
            "sup-norm mode supports d <= 3, got d={d}"
        ))),
        NormMode::Linf => Ok(1.0),
        NormMode::L1 => {
            let denom = k as f64 * (d * d) as f64 * 2f64.powi(d as i32 - 1);
            let u = 1.0 / denom;
            let root = (-u).ln_1p() / d as f64;
            Ok(-1.0 / root.exp_m1())
        }
    }
}

pub fn g_unit_eval(a: f64, pi: &[usize], t: usize, m: f64, x: &[f64]) -> f64 {
    let tf = t as f64;
    let mut inner = 0.0;
    for (&p, &xr) in pi.iter().zip(x) {
        inner += -m * relu(-xr + p as f64 / tf);
    }
    a * relu(inner + 1.0 / tf)
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(non_snake_case)]
pub struct ConstructedNet {
    pub d: usize,
    pub t: usize,
    pub M: f64,
    pub b: f64,
    /// `a[i - 1]` multiplies g-unit `i`, for `i = 1 .. k-1`.
    pub a: Vec<f64>,
}

impl ConstructedNet {
    pub fn k(&self) -> usize {
        self.a.len() + 1
    }

    pub fn pi(&self, i: usize) -> Vec<usize> {
        base_rep(i, self.t, self.d).expect("index within the grid")
    }

    pub fn vertex(&self, i: usize) -> Vec<f64> {
        self.pi(i).iter().map(|&p| p as f64 / self.t as f64).collect()
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        constructed_forward(self, x)
    }

    /// Value of `b + sum_{j <= upto} g_j(x)`.
    pub fn partial_forward(&self, x: &[f64], upto: usize) -> f64 {
        let mut pi = vec![0usize; self.d];
        let mut y = self.b;
        for j in 1..=upto.min(self.a.len()) {
            increment(&mut pi, self.t);
            y += g_unit_eval(self.a[j - 1], &pi, self.t, self.M, x);
        }
        y
    }

    /// Forward pass with an arithmetic-operation count: per unit, `d`
    /// first-layer adds and multiply-adds into the second layer, one bias
    /// add and one output multiply-add.
    pub fn forward_counted(&self, x: &[f64]) -> (f64, usize) {
        let mut ops = 0;
        let mut pi = vec![0usize; self.d];
        let tf = self.t as f64;
        let mut y = self.b;
        for j in 1..=self.a.len() {
            increment(&mut pi, self.t);
            let mut inner = 0.0;
            for (&p, &xr) in pi.iter().zip(x) {
                inner += -self.M * relu(-xr + p as f64 / tf);
                ops += 2;
            }
            y += self.a[j - 1] * relu(inner + 1.0 / tf);
            ops += 2;
        }
        (y, ops)
    }

    /// Dense `[d, (k-1) d, k-1, 1]` network computing the same function.
    pub fn to_mlp(&self) -> Result<Mlp> {
        let (d, units) = (self.d, self.a.len());
        if units == 0 {
            return Err(Error::Construction("grid has no g-units to expand".into()));
        }
        let dims = [d, units * d, units, 1];
        let h1 = units * d;
        let mut w1 = vec![0.0; h1 * d];
        let mut b1 = vec![0.0; h1];
        let mut w2 = vec![0.0; units * h1];
        let b2 = vec![1.0 / self.t as f64; units];
        let mut pi = vec![0usize; d];
        for u in 0..units {
            increment(&mut pi, self.t);
            for r in 0..d {
                let row = u * d + r;
                w1[row * d + r] = -1.0;
                b1[row] = pi[r] as f64 / self.t as f64;
                w2[u * h1 + row] = -self.M;
            }
        }
        Mlp::from_layers(&dims, &[(w1, b1), (w2, b2), (self.a.clone(), vec![self.b])])
    }
}

/// Advances base-(t+1) digits by one, most significant first.
fn increment(pi: &mut [usize], t: usize) {
    for digit in pi.iter_mut().rev() {
        if *digit < t {
            *digit += 1;
            return;
        }
        *digit = 0;
    }
}

pub fn constructed_forward(net: &ConstructedNet, x: &[f64]) -> f64 {
    // First-layer activations only depend on (r, pi_r): tabulate them once.
    let (d, t) = (net.d, net.t);
    let tf = t as f64;
    let mut table = vec![0.0; d * (t + 1)];
    for r in 0..d {
        for p in 0..=t {
            table[r * (t + 1) + p] = -net.M * relu(-x[r] + p as f64 / tf);
        }
    }
    let inv_t = 1.0 / tf;
    let mut pi = vec![0usize; d];
    let mut y = net.b;
    for &a in &net.a {
        increment(&mut pi, t);
        let mut inner = 0.0;
        for r in 0..d {
            inner += table[r * (t + 1) + pi[r]];
        }
        y += a * relu(inner + inv_t);
    }
    y
}

/// Sequential construction memorizing `f` on every grid vertex.
pub fn construct_network(
    f: &dyn Fn(&[f64]) -> f64,
    t: usize,
    d: usize,
    mode: NormMode,
) -> Result<ConstructedNet> {
    construct_network_limited(f, t, d, mode, DEFAULT_MAX_DIM, DEFAULT_MAX_T)
}

pub fn construct_network_limited(
    f: &dyn Fn(&[f64]) -> f64,
    t: usize,
    d: usize,
    mode: NormMode,
    max_dim: usize,
    max_t: usize,
) -> Result<ConstructedNet> {
    if d == 0 {
        return Err(Error::arg("input dimension must be at least 1"));
    }
    if d > max_dim || t > max_t {
        return Err(Error::arg(format!(
            "construction limited to d <= {max_dim}, t <= {max_t}; got d={d}, t={t}"
        )));
    }
    let k = vertex_count(t, d)?;
    let m = compute_M(k, d, mode)?;
    let tf = t as f64;
    let eval = |x: &[f64]| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::Construction(format!("f is not finite at vertex {x:?}")))
        }
    };
    let b = eval(&vec![0.0; d])?;

    // At a vertex v, unit j contributes exactly a_j / t when
    // pi^j <= pi^v componentwise and 0 otherwise, so the running estimate
    // is a sum over the dominated box. `acc[i]` holds sum of a_j / t over
    // that box, built by inclusion-exclusion over the d neighbours.
    let base = t + 1;
    let strides: Vec<usize> = (0..d).map(|r| base.pow((d - 1 - r) as u32)).collect();
    let mut acc = vec![0.0f64; k];
    let mut a = Vec::with_capacity(k - 1);
    let mut pi = vec![0usize; d];
    for i in 1..k {
        increment(&mut pi, t);
        let vertex: Vec<f64> = pi.iter().map(|&p| p as f64 / tf).collect();
        let box_sum = dominated_sum(&acc, &pi, &strides, i);
        let y_hat = b + box_sum;
        let ai = tf * (eval(&vertex)? - y_hat);
        a.push(ai);
        acc[i] = box_sum + ai / tf;
    }
    Ok(ConstructedNet { d, t, M: m, b, a })
}

/// Sum of unit outputs over vertices strictly dominated by `pi` (index `i`),
/// from prefix sums of earlier vertices via inclusion-exclusion.
fn dominated_sum(acc: &[f64], pi: &[usize], strides: &[usize], i: usize) -> f64 {
    // acc[j] = total contribution at vertex j of units 1..=j, i.e. the
    // weighted count over the closed box [0, pi^j]. The box for i minus
    // its corner equals the union of the boxes of i - e_r; inclusion-
    // exclusion over nonempty subsets S of decremented coordinates.
    let d = pi.len();
    let mut total = 0.0;
    for mask in 1u32..(1u32 << d) {
        let mut j = i;
        let mut ok = true;
        for r in 0..d {
            if mask & (1 << r) != 0 {
                if pi[r] == 0 {
                    ok = false;
                    break;
                }
                j -= strides[r];
            }
        }
        if ok {
            let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
            total += sign * acc[j];
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub l1_err: f64,
    pub linf_err: f64,
    pub l1_bound: f64,
    pub linf_bound: f64,
    pub l1_pass: bool,
    /// `None` when the sup-norm bound does not apply (`d > 3`).
    pub linf_pass: Option<bool>,
}

/// Monte-Carlo mean absolute error and sampled sup error of `net` against
/// `f`; the sup also scans every vertex and every cell midpoint.
pub fn verify_bounds(
    net: &ConstructedNet,
    f: &dyn Fn(&[f64]) -> f64,
    rho: f64,
    samples: usize,
    seed: u64,
) -> Result<BoundReport> {
    if samples == 0 {
        return Err(Error::arg("need at least one sample"));
    }
    let d = net.d;
    let mut g = rng::seeded(seed);
    let mut x = vec![0.0; d];
    let (mut l1, mut linf) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        for v in &mut x {
            *v = g.random();
        }
        let e = (net.forward(&x) - f(&x)).abs();
        l1 += e;
        linf = linf.max(e);
    }
    l1 /= samples as f64;
    let tf = net.t as f64;
    let mut pi = vec![0usize; d];
    for i in 0..net.k() {
        if i > 0 {
            increment(&mut pi, net.t);
        }
        let v: Vec<f64> = pi.iter().map(|&p| p as f64 / tf).collect();
        linf = linf.max((net.forward(&v) - f(&v)).abs());
        if pi.iter().all(|&p| p < net.t) {
            let mid: Vec<f64> = pi.iter().map(|&p| (p as f64 + 0.5) / tf).collect();
            linf = linf.max((net.forward(&mid) - f(&mid)).abs());
        }
    }
    let l1_bound = 3.0 * rho * d as f64 / tf;
    let linf_bound = 37.0 * rho * d as f64 / tf;
    Ok(BoundReport {
        l1_err: l1,
        linf_err: linf,
        l1_bound,
        linf_bound,
        l1_pass: l1 <= l1_bound,
        linf_pass: (d <= 3).then_some(linf <= linf_bound),
    })
}

/// Largest absolute memorization error over the grid, relative to `1 + |f|`.
pub fn max_vertex_error(net: &ConstructedNet, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    (0..net.k())
        .map(|i| {
            let v = net.vertex(i);
            let y = f(&v);
            (net.forward(&v) - y).abs() / (1.0 + y.abs())
        })
        .fold(0.0, f64::max)
}

pub fn coefficient_bound(d: usize, rho: f64) -> f64 {
    2f64.powi(d as i32 - 1) * d as f64 * rho
}

#[derive(Debug, Clone)]
pub struct ConstructSgdOutcome {
    pub constructed: ConstructedNet,
    /// Expanded network before training, in raw label units.
    pub initial: Mlp,
    /// Trained network, in raw label units.
    pub trained: Mlp,
    pub pre_loss: f64,
    pub post_loss: f64,
    pub training: TrainOutcome,
}

/// Builds the memorizing network for `f`, expands it into dense layers and
/// continues training it with Adam on `ts`.
pub fn construct_then_sgd(
    f: &dyn Fn(&[f64]) -> f64,
    t: usize,
    d: usize,
    mode: NormMode,
    ts: &TrainingSet,
    cfg: &TrainConfig,
) -> Result<ConstructSgdOutcome> {
    if ts.dim() != d {
        return Err(Error::arg("training set dimension differs from d"));
    }
    let constructed = construct_network(f, t, d, mode)?;
    let initial = constructed.to_mlp()?;
    // Express the starting function in the label space train_adam uses.
    let mut start = initial.clone();
    start.to_standardized(&crate::mlp::training_scale(ts, cfg));
    let training = train_adam(start, ts, cfg)?;
    let mut trained = training.model.clone();
    trained.from_standardized(&training.scale);
    let pre_loss = initial.mse(ts, &crate::mlp::LabelScale::IDENTITY);
    let post_loss = trained.mse(ts, &crate::mlp::LabelScale::IDENTITY);
    Ok(ConstructSgdOutcome {
        constructed,
        initial,
        trained,
        pre_loss,
        post_loss,
        training,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_representation() {
        assert_eq!(base_rep(6, 3, 2).unwrap(), vec![1, 2]);
        assert_eq!(base_rep(0, 5, 3).unwrap(), vec![0, 0, 0]);
        assert!(base_rep(16, 3, 2).is_err());
        let mut g = rng::seeded(1);
        for _ in 0..200 {
            let (t, d) = (g.random_range(1..9usize), g.random_range(1..5usize));
            let k = vertex_count(t, d).unwrap();
            let i = g.random_range(0..k);
            let pi = base_rep(i, t, d).unwrap();
            let back: usize = pi.iter().enumerate().map(|(r, &p)| p * (t + 1).pow((d - 1 - r) as u32)).sum();
            assert_eq!(back, i);
        }
    }

    #[test]
    fn m_constant() {
        // d = 1 collapses to M = k.
        for k in [2, 3, 10, 1000] {
            let m = compute_M(k, 1, NormMode::L1).unwrap();
            assert!((m - k as f64).abs() < 1e-9 * k as f64, "k={k}: {m}");
        }
        let direct = 1.0 / (1.0 - (31.0f64 / 32.0).sqrt());
        assert!((compute_M(4, 2, NormMode::L1).unwrap() - direct).abs() < 1e-9);
        // The closed form evaluates to 63.49603; the rounded reference value
        // 63.498 is met to its stated precision only loosely.
        assert!((direct - 63.496031496).abs() < 1e-8);
        assert!((direct - 63.498).abs() < 5e-3);
        assert_eq!(compute_M(99, 3, NormMode::Linf).unwrap(), 1.0);
        assert!(compute_M(99, 4, NormMode::Linf).is_err());
        // Stable for large k where the naive form loses all precision.
        let m = compute_M(65usize.pow(6), 6, NormMode::L1).unwrap();
        let k = 65f64.powi(6);
        let approx = k * 36.0 * 32.0 * 6.0;
        assert!(m.is_finite() && (m / approx - 1.0).abs() < 1e-6);
    }

    #[test]
    fn g_unit_quadrant() {
        let (t, m) = (4, 3.0);
        let pi = [1, 2];
        assert!((g_unit_eval(2.0, &pi, t, m, &[0.25, 0.5]) - 0.5).abs() < 1e-15);
        assert!((g_unit_eval(2.0, &pi, t, m, &[0.9, 0.75]) - 0.5).abs() < 1e-15);
        // Vertex below the unit's corner in one coordinate.
        assert_eq!(g_unit_eval(2.0, &pi, t, m, &[0.0, 0.75]), 0.0);
        assert_eq!(g_unit_eval(2.0, &pi, t, m, &[0.75, 0.25]), 0.0);
        assert_eq!(g_unit_eval(0.0, &pi, t, m, &[0.3, 0.6]), 0.0);
    }

    #[test]
    fn identity_hand_stepped() {
        let f = |x: &[f64]| x[0];
        let net = construct_network(&f, 2, 1, NormMode::Linf).unwrap();
        assert_eq!(net.b, 0.0);
        assert_eq!(net.a, vec![1.0, 1.0]);
        assert!((net.forward(&[0.75]) - 0.75).abs() < 1e-15);
        assert_eq!(net.forward(&[0.0]), 0.0);
    }

    #[test]
    fn constant_function() {
        let f = |_: &[f64]| 2.5;
        let net = construct_network(&f, 4, 2, NormMode::L1).unwrap();
        assert_eq!(net.b, 2.5);
        assert!(net.a.iter().all(|&a| a == 0.0));
        let r = verify_bounds(&net, &f, 0.0, 1_000, 1).unwrap();
        assert_eq!((r.l1_err, r.linf_err), (0.0, 0.0));
    }

    #[test]
    fn origin_returns_bias() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() + x[1] * x[1];
        let net = construct_network(&f, 5, 2, NormMode::L1).unwrap();
        assert_eq!(net.forward(&[0.0, 0.0]), net.b);
    }

    #[test]
    fn fast_paths_agree_with_definition() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + 0.5 * (x[1] * x[2]);
        let net = construct_network(&f, 3, 3, NormMode::L1).unwrap();
        let mut g = rng::seeded(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| g.random()).collect();
            let direct = net.partial_forward(&x, net.a.len());
            assert!((net.forward(&x) - direct).abs() < 1e-12);
            assert!((net.forward_counted(&x).0 - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn no_forgetting() {
        // After unit i is placed, vertices j < i keep their value.
        let f = |x: &[f64]| x[0] * x[0] - 0.7 * x[1];
        let net = construct_network(&f, 3, 2, NormMode::L1).unwrap();
        for i in 1..net.k() {
            for j in 0..i {
                let v = net.vertex(j);
                let before = net.partial_forward(&v, i - 1);
                let after = net.partial_forward(&v, i);
                assert!((before - after).abs() < 1e-12, "unit {i} moved vertex {j}");
            }
            let v = net.vertex(i);
            assert!((net.partial_forward(&v, i) - f(&v)).abs() < 1e-12);
        }
    }

    #[test]
    fn op_count_linear_in_kd() {
        let f = |x: &[f64]| x.iter().sum::<f64>();
        for (t, d) in [(2, 1), (4, 2), (3, 3), (8, 2)] {
            let net = construct_network(&f, t, d, NormMode::L1).unwrap();
            let (_, ops) = net.forward_counted(&vec![0.4; d]);
            assert_eq!(ops, (net.k() - 1) * (2 * d + 2));
        }
    }

    #[test]
    fn expansion_matches_construction() {
        let f = |x: &[f64]| (x[0] - 0.5).abs() + x[1];
        let net = construct_network(&f, 4, 2, NormMode::L1).unwrap();
        let mlp = net.to_mlp().unwrap();
        assert_eq!(mlp.dims(), &[2, 48, 24, 1]);
        let mut g = rng::seeded(9);
        for _ in 0..1_000 {
            let x = [g.random::<f64>(), g.random::<f64>()];
            assert!((mlp.forward(&x) - net.forward(&x)).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite_and_oversized() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { 0.0 };
        assert!(matches!(construct_network(&f, 4, 1, NormMode::L1), Err(Error::Construction(_))));
        let g = |_: &[f64]| 0.0;
        assert!(construct_network(&g, 17, 1, NormMode::L1).is_err());
        assert!(construct_network(&g, 2, 5, NormMode::L1).is_err());
        assert!(construct_network_limited(&g, 2, 5, NormMode::L1, 5, 16).is_ok());
    }

    #[test]
    fn linear_l1_bound() {
        let f = |x: &[f64]| x[0] + x[1];
        let net = construct_network(&f, 8, 2, NormMode::L1).unwrap();
        let r = verify_bounds(&net, &f, 1.0, 100_000, 2).unwrap();
        assert_eq!(r.l1_bound, 0.75);
        assert!(r.l1_pass, "{r:?}");
    }

    #[test]
    fn abs_linf_bound_one_dim() {
        let f = |x: &[f64]| (x[0] - 0.5).abs();
        let net = construct_network(&f, 16, 1, NormMode::Linf).unwrap();
        let r = verify_bounds(&net, &f, 1.0, 100_000, 3).unwrap();
        assert!(r.linf_err <= 37.0 / 16.0);
        assert_eq!(r.linf_pass, Some(true));
    }
}
