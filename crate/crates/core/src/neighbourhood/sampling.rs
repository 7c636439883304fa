use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::counts::{CountEntry, NeighbourCountSample};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, seeded};

/// Simple random sample without replacement of `m` records from a
/// frequency table. Record positions are drawn uniformly and mapped back to
/// their class through the cumulative frequencies.
pub fn srs_sample(full: &NeighbourCountSample, m: u64, seed: u64) -> Result<NeighbourCountSample> {
    if m == 0 {
        return Err(invalid("m", "sample size must be at least 1"));
    }
    let population = full.m();
    if m > population {
        return Err(Error::SampleTooLarge {
            requested: m,
            population,
        });
    }
    let entries = full.entries();
    let mut upper = Vec::with_capacity(entries.len());
    let mut acc = 0u64;
    for e in entries {
        acc += e.freq;
        upper.push(acc);
    }
    let mut rng = seeded(seed);
    let mut taken = vec![0u64; entries.len()];
    for pos in index::sample(&mut rng, population as usize, m as usize) {
        taken[upper.partition_point(|&u| u <= pos as u64)] += 1;
    }
    let out = entries
        .iter()
        .zip(taken)
        .filter(|(_, t)| *t > 0)
        .map(|(e, t)| CountEntry { freq: t, ..*e })
        .collect();
    NeighbourCountSample::from_entries(out)
}

/// Sorted indices of an SRS of `m` out of `n` records.
pub fn srs_records(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > n {
        return Err(Error::SampleTooLarge {
            requested: m as u64,
            population: n as u64,
        });
    }
    let mut rng = seeded(seed);
    let mut idx = index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

fn ceil_robust(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `factor * ceil(N^(2/5))`, rounded up. Sizes of order `sqrt(N)` or more
/// break the independence regime the estimator relies on and are warned
/// about.
pub fn recommended_sample_size(population: u64, factor: f64) -> Result<u64> {
    if population == 0 {
        return Err(invalid("population", "must be at least 1"));
    }
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(invalid("factor", "must be positive"));
    }
    let base = ceil_robust((population as f64).powf(0.4));
    let m = ceil_robust(factor * base) as u64;
    if population > 1 && (m as f64) >= (population as f64).sqrt() {
        log::warn!("sample size {m} is not small relative to sqrt({population})");
    }
    Ok(m)
}

/// Lag-1 sample autocorrelation, `None` when the series has no variance.
pub fn lag1_autocorrelation(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if den <= 0.0 {
        return None;
    }
    let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    Some(num / den)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceCheck {
    /// Lag-1 autocorrelation per subsample; zero for degenerate ones.
    pub rhos: Vec<f64>,
    pub mean_rho: f64,
    /// Maximum of `|rho|` over subsamples.
    pub statistic: f64,
    /// Subsamples whose counts had zero variance.
    pub degenerate: usize,
}

impl IndependenceCheck {
    /// Number of subsamples with `|rho| < bound`.
    pub fn count_below(&self, bound: f64) -> usize {
        self.rhos.iter().filter(|r| r.abs() < bound).count()
    }
}

/// Draws `reps` record-level SRSs of size `m` from counts listed in record
/// order and measures the lag-1 autocorrelation of each subsample, records
/// kept in their original order.
pub fn empirical_independence_check(counts: &[u64], m: usize, reps: usize, seed: u64) -> Result<IndependenceCheck> {
    if m < 3 {
        return Err(invalid("m", "autocorrelation needs at least 3 records"));
    }
    if reps == 0 {
        return Err(invalid("reps", "must be at least 1"));
    }
    let mut rhos = Vec::with_capacity(reps);
    let mut degenerate = 0;
    for r in 0..reps {
        let idx = srs_records(counts.len(), m, derive_seed(seed, r as u64))?;
        let x: Vec<f64> = idx.iter().map(|&i| counts[i] as f64).collect();
        match lag1_autocorrelation(&x) {
            Some(rho) => rhos.push(rho),
            None => {
                degenerate += 1;
                rhos.push(0.0);
            }
        }
    }
    let mean_rho = rhos.iter().sum::<f64>() / reps as f64;
    let statistic = rhos.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(IndependenceCheck {
        rhos,
        mean_rho,
        statistic,
        degenerate,
    })
}
