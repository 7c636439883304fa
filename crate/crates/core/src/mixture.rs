//! Finite mixture of `Bernoulli(p) + Poisson(lambda)` components for the
//! number of neighbours of a record.
//!
//! Class `g` has weight `alpha_g`; within the class the matched record is a
//! neighbour with probability `p_g` and the unmatched neighbours are
//! Poisson with mean `lambda_g`. Two parameter lists give the same count
//! distribution exactly when they agree after merging components with equal
//! `lambda` (weights add, `p` becomes the weight-averaged `p`), so the
//! canonical form keeps one component per distinct `lambda`, sorted in
//! decreasing `lambda`, with every weight strictly positive.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::counts::NeighbourCountSample;
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Smallest admissible Poisson mean.
pub const LAMBDA_FLOOR: f64 = 1e-8;
/// Relative tolerance under which two `lambda` values are merged.
pub const MERGE_TOL: f64 = 1e-9;
/// Added inside the logarithm of the log-likelihood.
pub const LOG_GUARD: f64 = 1e-300;
/// Accepted deviation of raw mixing weights from a unit sum.
pub const ALPHA_SUM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentParams {
    pub alpha: f64,
    pub p: f64,
    pub lambda: f64,
}

impl ComponentParams {
    pub fn new(alpha: f64, p: f64, lambda: f64) -> Self {
        Self { alpha, p, lambda }
    }

    /// `P(n = k)` for this component alone.
    pub fn pmf(&self, k: u64) -> f64 {
        component_pmf(self.p, self.lambda, k)
    }
}

/// Log of the Poisson pmf, `-lambda + j ln(lambda) - ln(j!)`.
pub fn ln_poisson(j: u64, lambda: f64) -> f64 {
    if j == 0 {
        -lambda
    } else {
        -lambda + j as f64 * lambda.ln() - ln_gamma(j as f64 + 1.0)
    }
}

/// `P(n = k)` for `Bernoulli(p) + Poisson(lambda)`.
pub fn component_pmf(p: f64, lambda: f64, k: u64) -> f64 {
    component_ln_pmf(p, lambda, k).exp()
}

/// Log of [`component_pmf`]; `-inf` where the mass is exactly zero.
pub fn component_ln_pmf(p: f64, lambda: f64, k: u64) -> f64 {
    if k == 0 {
        (1.0 - p).ln() - lambda
    } else {
        ln_poisson(k - 1, lambda) + (p + (1.0 - p) * lambda / k as f64).ln()
    }
}

/// Canonical mixture parameters. Construct through [`canonicalize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture")]
pub struct MixtureParams {
    components: Vec<ComponentParams>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMixture {
    components: Vec<ComponentParams>,
}

impl TryFrom<RawMixture> for MixtureParams {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        canonicalize(&raw.components)
    }
}

impl MixtureParams {
    /// Single component with weight one.
    pub fn single(p: f64, lambda: f64) -> Result<Self> {
        canonicalize(&[ComponentParams::new(1.0, p, lambda)])
    }

    pub fn components(&self) -> &[ComponentParams] {
        &self.components
    }

    /// Number of components `G`.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `E[p] = sum_g alpha_g p_g`.
    pub fn expected_p(&self) -> f64 {
        self.components.iter().map(|c| c.alpha * c.p).sum()
    }

    /// `E[lambda] = sum_g alpha_g lambda_g`.
    pub fn expected_lambda(&self) -> f64 {
        self.components.iter().map(|c| c.alpha * c.lambda).sum()
    }

    /// Mean number of neighbours, `E[p] + E[lambda]`.
    pub fn mean(&self) -> f64 {
        self.expected_p() + self.expected_lambda()
    }

    pub fn max_lambda(&self) -> f64 {
        self.components[0].lambda
    }

    /// Truncation point `K*` beyond which the tail mass is negligible.
    pub fn truncation_point(&self) -> u64 {
        let l = self.max_lambda();
        (l + 30.0 * l.sqrt() + 30.0).ceil() as u64
    }

    pub fn pmf(&self, k: u64) -> f64 {
        pmf(self, k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Validates raw components and returns their canonical form: zero-weight
/// components dropped, equal-`lambda` components merged, sorted by
/// decreasing `lambda`, weights renormalized to sum to one.
pub fn canonicalize(raw: &[ComponentParams]) -> Result<MixtureParams> {
    if raw.is_empty() {
        return Err(Error::Empty("mixture components"));
    }
    for c in raw {
        if !(c.alpha >= 0.0 && c.alpha.is_finite()) {
            return Err(invalid("alpha", format!("{} is not a nonnegative weight", c.alpha)));
        }
        if !(0.0..=1.0).contains(&c.p) {
            return Err(invalid("p", format!("{} is outside [0, 1]", c.p)));
        }
        if !(c.lambda.is_finite() && c.lambda >= LAMBDA_FLOOR) {
            return Err(invalid(
                "lambda",
                format!("{} is below the floor {LAMBDA_FLOOR:e}", c.lambda),
            ));
        }
    }
    let total: f64 = raw.iter().map(|c| c.alpha).sum();
    if (total - 1.0).abs() > ALPHA_SUM_TOL {
        return Err(invalid("alpha", format!("weights sum to {total}, not 1")));
    }

    let mut live: Vec<ComponentParams> = raw.iter().copied().filter(|c| c.alpha > 0.0).collect();
    live.sort_by(|a, b| b.lambda.total_cmp(&a.lambda));

    let mut merged: Vec<ComponentParams> = Vec::with_capacity(live.len());
    // Group anchor is the largest lambda of the group, so merging does not drift.
    let mut anchor = f64::NAN;
    for c in live {
        let same = (anchor - c.lambda).abs() <= MERGE_TOL * anchor;
        match merged.last_mut() {
            Some(last) if same => {
                let a = last.alpha + c.alpha;
                last.p = (last.alpha * last.p + c.alpha * c.p) / a;
                last.lambda = (last.alpha * last.lambda + c.alpha * c.lambda) / a;
                last.alpha = a;
            }
            _ => {
                anchor = c.lambda;
                merged.push(c);
            }
        }
    }
    let total: f64 = merged.iter().map(|c| c.alpha).sum();
    // Skip renormalizing an already-normalized list so canonicalization is idempotent.
    let renormalize = (total - 1.0).abs() > 4.0 * f64::EPSILON;
    for c in &mut merged {
        if renormalize {
            c.alpha /= total;
        }
        c.p = c.p.clamp(0.0, 1.0);
    }
    Ok(MixtureParams { components: merged })
}

/// Mixture pmf `P(n = k)`.
pub fn pmf(params: &MixtureParams, k: u64) -> f64 {
    params.components.iter().map(|c| c.alpha * c.pmf(k)).sum()
}

/// Observed-data composite log-likelihood `sum_i freq_i ln(pmf(n_i) + guard)`.
pub fn log_likelihood(params: &MixtureParams, sample: &NeighbourCountSample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty("neighbour-count sample"));
    }
    Ok(sample
        .distinct()
        .into_iter()
        .map(|(n, freq)| freq as f64 * (pmf(params, n) + LOG_GUARD).ln())
        .sum())
}

/// Draws `m` iid counts from the mixture.
pub fn sample_counts(params: &MixtureParams, m: u64, seed: u64) -> Result<NeighbourCountSample> {
    if m == 0 {
        return Err(invalid("m", "sample size must be at least 1"));
    }
    let mut rng = rng::seeded(seed);
    let poissons: Vec<Poisson<f64>> = params
        .components
        .iter()
        .map(|c| Poisson::new(c.lambda).expect("lambda is positive and finite"))
        .collect();
    let mut cumulative = Vec::with_capacity(params.len());
    let mut acc = 0.0;
    for c in &params.components {
        acc += c.alpha;
        cumulative.push(acc);
    }

    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for _ in 0..m {
        let u: f64 = rng.random::<f64>() * acc;
        let g = cumulative.partition_point(|&c| c <= u).min(params.len() - 1);
        let comp = &params.components[g];
        let bern = u64::from(rng.random::<f64>() < comp.p);
        let pois = poissons[g].sample(&mut rng) as u64;
        *counts.entry(bern + pois).or_insert(0) += 1;
    }
    Ok(NeighbourCountSample::from_pairs(counts))
}
