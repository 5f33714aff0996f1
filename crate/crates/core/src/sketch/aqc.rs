//! Average query-function change over pairs of labeled queries.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::query::TrainingSet;
use crate::rng;

pub const DEFAULT_PAIR_CAP: usize = 100_000;

const MIN_DISTANCE: f64 = 1e-12;

/// Mean of `|y_i - y_j| / ||q_i - q_j||_2` over all pairs of `ts`, or over
/// `pair_cap` random pairs of distinct entries when there are more pairs.
pub fn compute_aqc(ts: &TrainingSet, pair_cap: usize, seed: u64) -> Result<f64> {
    let all: Vec<usize> = (0..ts.len()).collect();
    aqc_subset(ts, &all, pair_cap, seed)
}

pub(crate) fn aqc_subset(ts: &TrainingSet, idx: &[usize], pair_cap: usize, seed: u64) -> Result<f64> {
    let m = idx.len();
    if m < 2 {
        return Err(Error::Aqc(format!("need at least 2 queries, got {m}")));
    }
    if pair_cap == 0 {
        return Err(Error::arg("pair cap must be at least 1"));
    }
    let ratio = |a: usize, b: usize| -> Option<f64> {
        let (qa, qb) = (ts.query(a), ts.query(b));
        let dist = qa
            .iter()
            .zip(qb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        (dist >= MIN_DISTANCE).then(|| (ts.label(a) - ts.label(b)).abs() / dist)
    };
    let (mut sum, mut used) = (0.0, 0usize);
    let total_pairs = m as u128 * (m as u128 - 1) / 2;
    if total_pairs <= pair_cap as u128 {
        for i in 0..m {
            for j in i + 1..m {
                if let Some(v) = ratio(idx[i], idx[j]) {
                    sum += v;
                    used += 1;
                }
            }
        }
    } else {
        let mut g = rng::seeded(seed);
        for _ in 0..pair_cap {
            let i = g.random_range(0..m);
            let mut j = g.random_range(0..m - 1);
            if j >= i {
                j += 1;
            }
            if let Some(v) = ratio(idx[i], idx[j]) {
                sum += v;
                used += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::Aqc("every query pair is degenerate (zero distance)".into()));
    }
    Ok(sum / used as f64)
}
