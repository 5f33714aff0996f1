//! One-dimensional data distributions with closed-form query functions.
//!
//! Gaussian and mixture distributions are truncated to `[0, 1]` by
//! rejection, so their densities are renormalized by the in-cube mass.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::data::{gen_mixture, gen_uniform, Component, Dataset};
use crate::error::{Error, Result};

/// Gaussian standard deviation used for the single-Gaussian harness case.
pub const HARNESS_GAUSSIAN_SIGMA: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Uniform,
    /// Equal-weight mixture of `(mean, sigma)` components.
    Mixture(Vec<(f64, f64)>),
}

impl Dist {
    pub fn gaussian(mu: f64, sigma: f64) -> Self {
        Dist::Mixture(vec![(mu, sigma)])
    }

    /// Two components at 0.25 and 0.75 with sigma 0.05.
    pub fn gmm2() -> Self {
        Dist::Mixture(vec![(0.25, 0.05), (0.75, 0.05)])
    }

    pub fn harness_gaussian() -> Self {
        Self::gaussian(0.5, HARNESS_GAUSSIAN_SIGMA)
    }

    pub fn name(&self) -> String {
        match self {
            Dist::Uniform => "uniform".into(),
            Dist::Mixture(c) if c.len() == 1 => "gaussian".into(),
            Dist::Mixture(_) if *self == Dist::gmm2() => "gmm2".into(),
            Dist::Mixture(c) => format!("gmm{}", c.len()),
        }
    }

    /// `n` i.i.d. one-dimensional points.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            Dist::Uniform => gen_uniform(n, 1, seed),
            Dist::Mixture(c) => {
                let comps: Vec<Component> =
                    c.iter().map(|&(m, s)| Component::isotropic(vec![m], s)).collect();
                gen_mixture(n, &comps, seed)
            }
        }
    }

    /// Probability mass of `[lo, hi]` (clamped to the unit interval).
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
        if hi <= lo {
            return 0.0;
        }
        match self {
            Dist::Uniform => hi - lo,
            Dist::Mixture(c) => {
                let raw = |a: f64, b: f64| -> f64 {
                    c.iter().map(|&(m, s)| norm_cdf((b - m) / s) - norm_cdf((a - m) / s)).sum()
                };
                raw(lo, hi) / raw(0.0, 1.0)
            }
        }
    }

    /// `E[x; lo <= x < hi]`, the first moment restricted to the range.
    pub fn first_moment(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
        if hi <= lo {
            return 0.0;
        }
        match self {
            Dist::Uniform => 0.5 * (hi * hi - lo * lo),
            Dist::Mixture(c) => {
                let moment = |a: f64, b: f64| -> f64 {
                    c.iter()
                        .map(|&(m, s)| {
                            let (za, zb) = ((a - m) / s, (b - m) / s);
                            m * (norm_cdf(zb) - norm_cdf(za)) - s * (norm_pdf(zb) - norm_pdf(za))
                        })
                        .sum()
                };
                let total: f64 = c
                    .iter()
                    .map(|&(m, s)| norm_cdf((1.0 - m) / s) - norm_cdf(-m / s))
                    .sum();
                moment(lo, hi) / total
            }
        }
    }

    /// Expected COUNT of `(c, r)` over `n` points.
    pub fn expected_count(&self, n: usize, c: f64, r: f64) -> f64 {
        n as f64 * self.mass(c, c + r)
    }

    /// Expected SUM of the attribute itself over `(c, r)`.
    pub fn expected_sum(&self, n: usize, c: f64, r: f64) -> f64 {
        n as f64 * self.first_moment(c, c + r)
    }

    /// Lipschitz constant of the size-normalized COUNT function.
    pub fn ldq_count(&self) -> f64 {
        match self {
            Dist::Uniform => ldq_uniform_count(),
            Dist::Mixture(c) => {
                // Three times the peak of the mixture density; for a single
                // component this is exactly `ldq_gaussian_count(sigma)`.
                let grid = 4_001;
                let k = c.len() as f64;
                let peak = (0..grid)
                    .map(|i| {
                        let x = i as f64 / (grid - 1) as f64;
                        c.iter().map(|&(m, s)| norm_pdf((x - m) / s) / s).sum::<f64>() / k
                    })
                    .fold(0.0, f64::max);
                3.0 * peak
            }
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Dist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Dist::Uniform),
            "gaussian" => Ok(Dist::harness_gaussian()),
            "gmm2" | "gmm" => Ok(Dist::gmm2()),
            _ => Err(Error::arg(format!("unknown distribution {s:?}"))),
        }
    }
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn ldq_uniform_count() -> f64 {
    1.0
}

/// `3 / (sigma sqrt(2 pi))`.
pub fn ldq_gaussian_count(sigma: f64) -> f64 {
    3.0 / (sigma * (2.0 * PI).sqrt())
}
