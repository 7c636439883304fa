//! Maximum composite-likelihood fitting of the neighbour-count mixture by EM.
//!
//! The latent data for record `i` are its class indicators `c_ig` and the
//! split of `n_i` into the matched indicator `n_{i|M}` and the unmatched
//! count `n_{i|U}`. The E-step computes, per distinct count value, the
//! posterior class probability and the class-weighted conditional
//! expectations of both parts; the M-step is then a set of weighted means.

use std::collections::VecDeque;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::NeighbourCountSample;
use crate::error::{invalid, Error, Result};
use crate::mixture::{self, canonicalize, component_ln_pmf, ComponentParams, MixtureParams, LAMBDA_FLOOR};
use crate::rng;

/// Classes whose total responsibility falls below this are dropped.
pub const EMPTY_CLASS_TOL: f64 = 1e-12;
/// Absolute floor of the relative-change denominator in the stopping rule.
pub const CONVERGENCE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Starting interval half-width multiplier `t`.
    pub t0: f64,
    /// Starting log-scale step for adjusting `t`.
    pub step0: f64,
    /// Initial `p` for every class.
    pub init_p: f64,
    /// Maximum number of `t` adjustments.
    pub max_steps: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            step0: 1.0,
            init_p: 0.5,
            max_steps: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Number of trailing iterations inspected by the stopping rule.
    pub window: usize,
    pub rel_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub init: InitConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            window: 10,
            rel_tol: 1e-6,
            n_starts: 3,
            seed: 0,
            init: InitConfig::default(),
        }
    }
}

/// Posterior expectations for one class at one count value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassExpectation {
    /// `E[c_ig | n_i = k]`
    pub e_c: f64,
    /// `E[c_ig n_{i|M} | n_i = k]`
    pub e_cm: f64,
    /// `E[c_ig n_{i|U} | n_i = k]`
    pub e_cu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResponsibilityRow {
    pub k: u64,
    pub freq: u64,
    pub classes: Vec<ClassExpectation>,
}

/// E-step output, one row per distinct count value.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    pub rows: Vec<ResponsibilityRow>,
    /// Observed log-likelihood of the parameters the E-step was run at
    /// (without the log guard).
    pub loglik: f64,
}

/// Conditional expectations of the matched and unmatched parts of `k`
/// given class membership.
fn conditional_split(p: f64, lambda: f64, k: u64) -> (f64, f64) {
    if k == 0 {
        return (0.0, 0.0);
    }
    if p >= 1.0 {
        return (1.0, (k - 1) as f64);
    }
    let kf = k as f64;
    let denom = p * kf + (1.0 - p) * lambda;
    let matched = p * kf / denom;
    let unmatched = kf * (p * (kf - 1.0) + (1.0 - p) * lambda) / denom;
    (matched, unmatched)
}

pub fn e_step(params: &MixtureParams, sample: &NeighbourCountSample) -> Responsibilities {
    e_step_components(params.components(), sample)
}

pub(crate) fn e_step_components(comps: &[ComponentParams], sample: &NeighbourCountSample) -> Responsibilities {
    let mut loglik = 0.0;
    let mut log_w = vec![0.0; comps.len()];
    let rows = sample
        .distinct()
        .into_iter()
        .map(|(k, freq)| {
            for (lw, c) in log_w.iter_mut().zip(comps) {
                *lw = c.alpha.ln() + component_ln_pmf(c.p, c.lambda, k);
            }
            let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = if max == f64::NEG_INFINITY {
                // No class can produce k; fall back to the prior weights.
                comps.iter().map(|c| c.alpha).collect()
            } else {
                let sum: f64 = log_w.iter().map(|lw| (lw - max).exp()).sum();
                loglik += freq as f64 * (max + sum.ln());
                log_w.iter().map(|lw| (lw - max).exp() / sum).collect()
            };
            let classes = comps
                .iter()
                .zip(weights)
                .map(|(c, e_c)| {
                    let (m, u) = conditional_split(c.p, c.lambda, k);
                    ClassExpectation {
                        e_c,
                        e_cm: e_c * m,
                        e_cu: e_c * u,
                    }
                })
                .collect();
            ResponsibilityRow { k, freq, classes }
        })
        .collect();
    Responsibilities { rows, loglik }
}

/// Weighted-mean updates of `p`, `lambda` and `alpha`, followed by
/// canonicalization. Classes with negligible responsibility are dropped.
pub fn m_step(resp: &Responsibilities) -> Result<MixtureParams> {
    let g = resp.rows.first().map_or(0, |r| r.classes.len());
    if g == 0 {
        return Err(Error::Empty("responsibilities"));
    }
    let mut s_c = vec![0.0; g];
    let mut s_m = vec![0.0; g];
    let mut s_u = vec![0.0; g];
    let mut m = 0.0;
    for row in &resp.rows {
        let f = row.freq as f64;
        m += f;
        for (j, e) in row.classes.iter().enumerate() {
            s_c[j] += f * e.e_c;
            s_m[j] += f * e.e_cm;
            s_u[j] += f * e.e_cu;
        }
    }
    let raw: Vec<ComponentParams> = (0..g)
        .filter(|&j| s_c[j] >= EMPTY_CLASS_TOL)
        .map(|j| ComponentParams {
            alpha: s_c[j] / m,
            p: (s_m[j] / s_c[j]).clamp(0.0, 1.0),
            lambda: (s_u[j] / s_c[j]).max(LAMBDA_FLOOR),
        })
        .collect();
    let total: f64 = raw.iter().map(|c| c.alpha).sum();
    let raw: Vec<_> = raw
        .into_iter()
        .map(|c| ComponentParams {
            alpha: c.alpha / total,
            ..c
        })
        .collect();
    canonicalize(&raw)
}

/// Interval index of count `v` for half-width multiplier `t`.
///
/// The initialization grid uses means `lambda_j = (j t)^2` with intervals
/// `[lambda_j - t sqrt(lambda_j), lambda_j + t sqrt(lambda_j))`, i.e.
/// `[t^2 j (j - 1), t^2 j (j + 1))`. Consecutive intervals are contiguous:
/// solving `lambda - t sqrt(lambda) = ub` for the next mean gives
/// `sqrt(lambda) = (t + sqrt(t^2 + 4 ub)) / 2`, which is exactly `(j + 1) t`.
fn interval_index(v: u64, t: f64) -> u64 {
    let x = v as f64 / (t * t);
    let mut j = ((1.0 + (1.0 + 4.0 * x).sqrt()) / 2.0).floor().max(1.0) as u64;
    // Fix rounding at the boundaries.
    while j > 1 && x < (j * (j - 1)) as f64 {
        j -= 1;
    }
    while x >= (j * (j + 1)) as f64 {
        j += 1;
    }
    j
}

/// Occupied intervals for multiplier `t`: `(lambda_j, frequency)`.
fn occupied_intervals(distinct: &[(u64, u64)], t: f64) -> Vec<(f64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for &(v, f) in distinct {
        let j = interval_index(v, t);
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += f,
            _ => out.push((j, f)),
        }
    }
    out.into_iter().map(|(j, f)| (((j as f64) * t).powi(2), f)).collect()
}

/// Interval-grid initialization: classes are the occupied intervals of the
/// `lambda` grid, with `alpha` the sample share in each interval. `t` is
/// scaled multiplicatively (shrinking the step after each reversal) until
/// exactly `g` intervals are occupied.
pub fn initialize(sample: &NeighbourCountSample, g: usize, config: &InitConfig) -> Result<MixtureParams> {
    if sample.is_empty() {
        return Err(Error::Empty("neighbour-count sample"));
    }
    if g == 0 {
        return Err(invalid("G", "need at least one component"));
    }
    if !(config.t0 > 0.0 && config.step0 > 0.0) {
        return Err(invalid("t0", "t0 and step0 must be positive"));
    }
    let distinct = sample.distinct();
    if g > distinct.len() {
        return Err(Error::InfeasibleComponents {
            requested: g,
            attained: distinct.len(),
        });
    }

    let mut t = config.t0;
    let mut step = config.step0;
    // +1 when t was last increased, -1 when decreased.
    let mut last_dir = 0i8;
    let mut closest = 0usize;
    for _ in 0..=config.max_steps {
        let classes = occupied_intervals(&distinct, t);
        let count = classes.len();
        if count.abs_diff(g) < closest.abs_diff(g) || closest == 0 {
            closest = count;
        }
        if count == g {
            let total = sample.m() as f64;
            let raw: Vec<_> = classes
                .into_iter()
                .map(|(lambda, f)| ComponentParams {
                    alpha: f as f64 / total,
                    p: config.init_p,
                    lambda: lambda.max(LAMBDA_FLOOR),
                })
                .collect();
            return canonicalize(&raw);
        }
        // Wider intervals merge classes, so too many classes means increase t.
        let dir = if count > g { 1 } else { -1 };
        if last_dir != 0 && dir != last_dir {
            step /= 2.0;
        }
        t *= (f64::from(dir) * step).exp();
        last_dir = dir;
    }
    Err(Error::InfeasibleComponents {
        requested: g,
        attained: closest,
    })
}

/// Result of one EM fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: MixtureParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default)]
    pub start_index: usize,
    /// Observed log-likelihood before each iteration.
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

fn flatten(params: &MixtureParams) -> Vec<f64> {
    let comps = params.components();
    let g = comps.len();
    let mut v = Vec::with_capacity(3 * g);
    // The last alpha is determined by the others.
    v.extend(comps[..g - 1].iter().map(|c| c.alpha));
    v.extend(comps.iter().map(|c| c.p));
    v.extend(comps.iter().map(|c| c.lambda));
    v
}

fn window_converged(history: &VecDeque<Vec<f64>>, rel_tol: f64) -> bool {
    let dim = history[0].len();
    (0..dim).all(|i| {
        let (lo, hi) = history
            .iter()
            .map(|h| h[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        (hi - lo).abs() < rel_tol * lo.abs().max(CONVERGENCE_EPS)
    })
}

/// Runs EM from the given starting point.
pub fn run_em(init: &MixtureParams, sample: &NeighbourCountSample, config: &FitConfig) -> Result<FitResult> {
    if sample.is_empty() {
        return Err(Error::Empty("neighbour-count sample"));
    }
    let window = config.window.max(2);
    let mut current = init.clone();
    let mut history: VecDeque<Vec<f64>> = VecDeque::with_capacity(window + 1);
    history.push_back(flatten(&current));
    let mut trace = Vec::with_capacity(config.max_iter.min(4096));
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let resp = e_step(&current, sample);
        trace.push(resp.loglik);
        let next = m_step(&resp)?;
        iterations += 1;
        if next.len() != current.len() {
            history.clear();
        }
        current = next;
        history.push_back(flatten(&current));
        if history.len() > window {
            history.pop_front();
        }
        if history.len() == window && window_converged(&history, config.rel_tol) {
            converged = true;
            break;
        }
    }
    let loglik = mixture::log_likelihood(&current, sample)?;
    Ok(FitResult {
        params: current,
        loglik,
        iterations,
        converged,
        start_index: 0,
        loglik_trace: trace,
    })
}

/// Randomized variant of the grid start for the extra starts.
fn perturbed_start(base: &MixtureParams, seed: u64) -> Result<MixtureParams> {
    let mut rng = rng::seeded(seed);
    let raw: Vec<ComponentParams> = base
        .components()
        .iter()
        .map(|c| {
            let za: f64 = rng.sample(StandardNormal);
            let zl: f64 = rng.sample(StandardNormal);
            ComponentParams {
                alpha: c.alpha * (0.25 * za).exp(),
                p: rng.random_range(0.05..0.95),
                lambda: (c.lambda * (0.5 * zl).exp()).max(LAMBDA_FLOOR),
            }
        })
        .collect();
    let total: f64 = raw.iter().map(|c| c.alpha).sum();
    let raw: Vec<_> = raw
        .into_iter()
        .map(|c| ComponentParams {
            alpha: c.alpha / total,
            ..c
        })
        .collect();
    canonicalize(&raw)
}

/// Best-of-`n_starts` EM fit with `g` components. Start 0 is the grid
/// initialization; start `s > 0` perturbs it with seed `seed + s`. The
/// highest log-likelihood wins, ties going to the lowest start index.
pub fn fit(sample: &NeighbourCountSample, g: usize, config: &FitConfig) -> Result<FitResult> {
    if sample.is_empty() {
        return Err(Error::Empty("neighbour-count sample"));
    }
    if (sample.m() as usize) < g {
        return Err(invalid(
            "G",
            format!("sample size {} is smaller than G = {g}", sample.m()),
        ));
    }
    let base = initialize(sample, g, &config.init)?;
    let starts = config.n_starts.max(1);
    let results: Vec<Result<FitResult>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let init = if s == 0 {
                base.clone()
            } else {
                perturbed_start(&base, config.seed.wrapping_add(s as u64))?
            };
            let mut r = run_em(&init, sample, config)?;
            r.start_index = s;
            Ok(r)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.loglik > b.loglik) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::Empty("EM starts")))
}
