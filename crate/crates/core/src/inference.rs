//! Bootstrap standard errors and intervals, and the parametric-bootstrap
//! likelihood-ratio test for the number of mixture components.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::counts::NeighbourCountSample;
use crate::em::{fit, FitConfig};
use crate::error::{invalid, Error, Result};
use crate::linkage::{ErrorRates, Interval};
use crate::mixture::sample_counts;
use crate::rng::{derive_seed, seeded};
use crate::stats::{normal_quantile, sd};

/// Largest fraction of replicate fits that may fail.
pub const MAX_FAILURE_RATE: f64 = 0.10;
/// Tolerance on the log-likelihood ordering of nested fits.
pub const NESTING_TOL: f64 = 1e-6;

/// 1-based rank `max(1, floor(count * q))` into a sorted replicate list.
pub fn order_statistic_rank(count: usize, q: f64) -> usize {
    ((count as f64 * q).floor() as usize).clamp(1, count.max(1))
}

fn order_statistic(sorted: &[f64], q: f64) -> f64 {
    sorted[order_statistic_rank(sorted.len(), q) - 1]
}

/// `estimate +- z_{1 - alpha/2} * se`.
pub fn normal_interval(estimate: f64, se: f64, alpha: f64) -> (f64, f64) {
    let z = normal_quantile(1.0 - alpha / 2.0);
    (estimate - z * se, estimate + z * se)
}

/// Order statistics at ranks `max(1, floor(B alpha/2))` and
/// `max(1, floor(B (1 - alpha/2)))`.
pub fn percentile_interval(values: &[f64], alpha: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (order_statistic(&v, alpha / 2.0), order_statistic(&v, 1.0 - alpha / 2.0))
}

fn summarize(target: &str, estimate: f64, values: &[f64], alpha: f64) -> Interval {
    let se = sd(values);
    Interval {
        target: target.to_string(),
        se,
        level: 1.0 - alpha,
        normal_ci: normal_interval(estimate, se, alpha),
        percentile_ci: percentile_interval(values, alpha),
    }
}

/// Resample of size `m` drawn with replacement.
pub fn resample(sample: &NeighbourCountSample, seed: u64) -> NeighbourCountSample {
    let values = sample.expand();
    let mut rng = seeded(seed);
    let draws: Vec<u64> = (0..values.len())
        .map(|_| values[rng.random_range(0..values.len())])
        .collect();
    NeighbourCountSample::from_counts(&draws)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub index: usize,
    pub e_p: f64,
    pub e_lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub e_p: f64,
    pub e_lambda: f64,
    /// Population size used for the error rates, when given.
    pub population: Option<u64>,
    /// One entry per target: `E[p]`, `E[lambda]`, then `FNR` and `FPR` when
    /// the population size is known.
    pub intervals: Vec<Interval>,
    pub b: usize,
    pub dropped: usize,
    pub replicates: Vec<ReplicateEstimate>,
}

impl BootstrapResult {
    pub fn interval(&self, target: &str) -> Option<&Interval> {
        self.intervals.iter().find(|i| i.target == target)
    }

    /// Replicate values as `(index, e_p, e_lambda)` rows.
    pub fn write_replicates<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["replicate", "e_p", "e_lambda"])?;
        for r in &self.replicates {
            wtr.write_record([r.index.to_string(), r.e_p.to_string(), r.e_lambda.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

/// Nonparametric bootstrap of `E[p]` and `E[lambda]` (and of the error
/// rates when `population` is given). Replicate `r` resamples with seed
/// `derive_seed(seed, r)` and refits with `config` unchanged, so identical
/// resamples give identical estimates. Replicates whose fit fails are
/// dropped.
pub fn bootstrap(
    sample: &NeighbourCountSample,
    g: usize,
    b: usize,
    alpha: f64,
    seed: u64,
    config: &FitConfig,
    population: Option<u64>,
) -> Result<BootstrapResult> {
    if b < 2 {
        return Err(invalid("B", "at least 2 replicates are required"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let point = fit(sample, g, config)?;
    let (e_p, e_lambda) = (point.params.expected_p(), point.params.expected_lambda());

    let fits: Vec<Option<ReplicateEstimate>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, r as u64);
            let resampled = resample(sample, s);
            match fit(&resampled, g, config) {
                Ok(f) => Some(ReplicateEstimate {
                    index: r,
                    e_p: f.params.expected_p(),
                    e_lambda: f.params.expected_lambda(),
                }),
                Err(e) => {
                    log::debug!("bootstrap replicate {r} dropped: {e}");
                    None
                }
            }
        })
        .collect();
    let replicates: Vec<ReplicateEstimate> = fits.into_iter().flatten().collect();
    let dropped = b - replicates.len();
    check_failures(dropped, b)?;
    if replicates.len() < 2 {
        return Err(Error::TooManyFailures {
            failed: dropped,
            total: b,
        });
    }

    let ps: Vec<f64> = replicates.iter().map(|r| r.e_p).collect();
    let ls: Vec<f64> = replicates.iter().map(|r| r.e_lambda).collect();
    let mut intervals = vec![
        summarize("E[p]", e_p, &ps, alpha),
        summarize("E[lambda]", e_lambda, &ls, alpha),
    ];
    if let Some(n) = population {
        let point_rates = ErrorRates::from_expectations(e_p, e_lambda, n)?;
        let rates = replicates
            .iter()
            .map(|r| ErrorRates::from_expectations(r.e_p, r.e_lambda, n))
            .collect::<Result<Vec<_>>>()?;
        let fnr: Vec<f64> = rates.iter().map(|r| r.fnr).collect();
        let fpr: Vec<f64> = rates.iter().map(|r| r.fpr).collect();
        intervals.push(summarize("FNR", point_rates.fnr, &fnr, alpha));
        intervals.push(summarize("FPR", point_rates.fpr, &fpr, alpha));
    }
    Ok(BootstrapResult {
        e_p,
        e_lambda,
        population,
        intervals,
        b,
        dropped,
        replicates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrtStatistic {
    pub value: f64,
    /// The raw statistic was negative and set to zero.
    pub clamped: bool,
    /// The larger model fitted worse than the smaller one by more than the
    /// nesting tolerance, which points at an optimizer failure.
    pub nesting_violated: bool,
}

/// `max(0, -2 (loglik_null - loglik_full))`.
pub fn lrt_statistic(loglik_null: f64, loglik_full: f64) -> LrtStatistic {
    let raw = -2.0 * (loglik_null - loglik_full);
    LrtStatistic {
        value: raw.max(0.0),
        clamped: raw < 0.0,
        nesting_violated: loglik_full < loglik_null - NESTING_TOL,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub g0: usize,
    pub gmax: usize,
    pub statistic: f64,
    pub critical_level: f64,
    /// Chi-squared level with `3 (gmax - g0)` degrees of freedom, for
    /// comparison only.
    pub chi2_level: f64,
    pub reject: bool,
    pub b: usize,
    pub alpha: f64,
    pub dropped: usize,
    pub clamped: usize,
    pub nesting_violations: usize,
    pub loglik_null: f64,
    pub loglik_full: f64,
    pub replicate_statistics: Vec<f64>,
}

impl LrtResult {
    pub fn decision(&self) -> &'static str {
        if self.reject {
            "reject"
        } else {
            "accept"
        }
    }
}

/// Rejects `g0` components in favour of `gmax` when the observed statistic
/// exceeds the `max(1, floor(B (1 - alpha)))`-th smallest statistic among
/// `B` samples simulated from the `g0` fit.
pub fn parametric_bootstrap_lrt(
    sample: &NeighbourCountSample,
    g0: usize,
    gmax: usize,
    b: usize,
    alpha: f64,
    seed: u64,
    config: &FitConfig,
) -> Result<LrtResult> {
    if g0 == 0 || g0 >= gmax {
        return Err(invalid("G0", "need 1 <= G0 < Gmax"));
    }
    if b < 20 {
        return Err(invalid("B", "at least 20 replicates are required"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let null_fit = fit(sample, g0, config)?;
    let full_fit = fit(sample, gmax, config)?;
    let observed = lrt_statistic(null_fit.loglik, full_fit.loglik);
    let m = sample.m();

    let stats: Vec<Option<LrtStatistic>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, r as u64);
            let run = || -> Result<LrtStatistic> {
                let sim = sample_counts(&null_fit.params, m, s)?;
                let cfg = FitConfig { seed: s, ..*config };
                let l0 = fit(&sim, g0, &cfg)?.loglik;
                let l1 = fit(&sim, gmax, &cfg)?.loglik;
                Ok(lrt_statistic(l0, l1))
            };
            match run() {
                Ok(st) => Some(st),
                Err(e) => {
                    log::debug!("LRT replicate {r} dropped: {e}");
                    None
                }
            }
        })
        .collect();
    let kept: Vec<LrtStatistic> = stats.into_iter().flatten().collect();
    let dropped = b - kept.len();
    check_failures(dropped, b)?;

    let clamped = kept.iter().filter(|s| s.clamped).count() + usize::from(observed.clamped);
    let nesting_violations =
        kept.iter().filter(|s| s.nesting_violated).count() + usize::from(observed.nesting_violated);
    if nesting_violations > 0 {
        log::warn!("{nesting_violations} LRT fits with G = {gmax} scored below G = {g0}");
    }
    let mut values: Vec<f64> = kept.iter().map(|s| s.value).collect();
    values.sort_by(f64::total_cmp);
    let critical_level = order_statistic(&values, 1.0 - alpha);
    let df = 3.0 * (gmax - g0) as f64;
    let chi2_level = ChiSquared::new(df).expect("positive df").inverse_cdf(1.0 - alpha);

    Ok(LrtResult {
        g0,
        gmax,
        statistic: observed.value,
        critical_level,
        chi2_level,
        reject: observed.value > critical_level,
        b,
        alpha,
        dropped,
        clamped,
        nesting_violations,
        loglik_null: null_fit.loglik,
        loglik_full: full_fit.loglik,
        replicate_statistics: values,
    })
}
