//! Probabilistic linkage parameters and error rates derived from a fitted
//! neighbour-count mixture.
//!
//! With `E[p]` and `E[lambda]` the mixture means of the class parameters and
//! `N` the population size:
//!
//! * m-probability `= E[p]`
//! * u-probability `= E[lambda] / (N - 1)`
//! * linkage weight `w = ln((N - 1) E[p] / E[lambda])`
//! * match probability of a neighbour `= (1 + E[lambda] / E[p])^-1`
//! * FNR `= 1 - E[p]`, FPR `= E[lambda] / (N - 1)`
//!
//! All logarithms are natural; [`WeightBase::Two`] only changes display.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixture::{ln_poisson, MixtureParams};

fn check_population(n: u64) -> Result<f64> {
    if n < 2 {
        return Err(invalid("N", format!("population size {n} must be at least 2")));
    }
    Ok((n - 1) as f64)
}

/// `P(neighbour | matched) = E[p]`.
pub fn m_probability(params: &MixtureParams) -> f64 {
    params.expected_p()
}

/// `P(neighbour | unmatched) = E[lambda] / (N - 1)`.
pub fn u_probability(params: &MixtureParams, n: u64) -> Result<f64> {
    Ok(params.expected_lambda() / check_population(n)?)
}

/// Natural-log weight from the two expectations; `-inf` when `E[p] = 0`.
pub fn weight_from_expectations(e_p: f64, e_lambda: f64, n: u64) -> Result<f64> {
    let nm1 = check_population(n)?;
    if e_p <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((nm1 * e_p / e_lambda).ln())
}

/// Linkage weight `ln((N - 1) E[p] / E[lambda])`.
pub fn linkage_weight(params: &MixtureParams, n: u64) -> Result<f64> {
    weight_from_expectations(params.expected_p(), params.expected_lambda(), n)
}

pub fn match_probability_from_expectations(e_p: f64, e_lambda: f64) -> f64 {
    if e_p <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + e_lambda / e_p)
}

/// `P(matched | neighbour) = (1 + E[lambda] / E[p])^-1`.
pub fn match_probability(params: &MixtureParams) -> f64 {
    match_probability_from_expectations(params.expected_p(), params.expected_lambda())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub fnr: f64,
    pub fpr: f64,
}

impl ErrorRates {
    pub fn from_expectations(e_p: f64, e_lambda: f64, n: u64) -> Result<Self> {
        let nm1 = check_population(n)?;
        Ok(Self {
            fnr: (1.0 - e_p).clamp(0.0, 1.0),
            fpr: (e_lambda / nm1).clamp(0.0, 1.0),
        })
    }
}

pub fn error_rates(params: &MixtureParams, n: u64) -> Result<ErrorRates> {
    ErrorRates::from_expectations(params.expected_p(), params.expected_lambda(), n)
}

/// Posterior probability that the matched record is among the `k`
/// neighbours of a record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordPosterior {
    pub probability: f64,
    /// Set when `k = 0`; the probability is then zero by definition.
    pub no_neighbours: bool,
}

/// `P(n_M = 1 | n = k)` under the Poisson approximation, as the ratio of the
/// mixture expectations of `p e^-l l^(k-1)/(k-1)!` and of the full
/// component pmf at `k`.
pub fn record_level_posterior(params: &MixtureParams, k: u64) -> RecordPosterior {
    if k == 0 {
        return RecordPosterior {
            probability: 0.0,
            no_neighbours: true,
        };
    }
    let kf = k as f64;
    let comps = params.components();
    // Shared scale keeps the ratio finite when every term underflows.
    let logs: Vec<f64> = comps.iter().map(|c| ln_poisson(k - 1, c.lambda)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (c, l) in comps.iter().zip(&logs) {
        let base = c.alpha * (l - max).exp();
        num += base * c.p;
        den += base * (c.p + (1.0 - c.p) * c.lambda / kf);
    }
    RecordPosterior {
        probability: if den > 0.0 { num / den } else { 0.0 },
        no_neighbours: false,
    }
}

/// `-ln(expected / N)` where `expected = (N - 1) lambda_N(v)` is the expected
/// number of unmatched neighbours of a record.
pub fn smoothed_frequency_weight(expected_unmatched: f64, n: u64) -> Result<f64> {
    if !(expected_unmatched > 0.0 && expected_unmatched.is_finite()) {
        return Err(invalid("lambda", "expected unmatched count must be positive"));
    }
    if n == 0 {
        return Err(invalid("N", "population size must be positive"));
    }
    Ok(-(expected_unmatched / n as f64).ln())
}

/// Lower bounds implied by a proper linkage problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProperDiagnostics {
    /// Smallest `p` over the classes.
    pub delta_hat: f64,
    /// Largest `lambda` over the classes.
    pub lambda_hat: f64,
    /// `delta / (1 + Lambda)`: lower bound on the chance that picking a
    /// random neighbour finds the matched record.
    pub tau_lower: f64,
    /// `ln(N - 1) - ln(Lambda)` in nats, `O(ln N / N)` term dropped.
    pub entropy_lower: f64,
    pub n: u64,
}

pub fn proper_diagnostics(p_values: &[f64], lambda_values: &[f64], n: u64) -> Result<ProperDiagnostics> {
    if p_values.is_empty() || lambda_values.is_empty() {
        return Err(Error::Empty("class parameters"));
    }
    if lambda_values.iter().any(|&l| !(l > 0.0)) {
        return Err(invalid("lambda", "all lambda values must be positive"));
    }
    let nm1 = check_population(n)?;
    let delta_hat = p_values.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda_hat = lambda_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ProperDiagnostics {
        delta_hat,
        lambda_hat,
        tau_lower: delta_hat / (1.0 + lambda_hat),
        entropy_lower: nm1.ln() - lambda_hat.ln(),
        n,
    })
}

impl ProperDiagnostics {
    pub fn from_params(params: &MixtureParams, n: u64) -> Result<Self> {
        let p: Vec<f64> = params.components().iter().map(|c| c.p).collect();
        let l: Vec<f64> = params.components().iter().map(|c| c.lambda).collect();
        proper_diagnostics(&p, &l, n)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightBase {
    #[default]
    Natural,
    Two,
}

impl WeightBase {
    pub fn convert(self, natural: f64) -> f64 {
        match self {
            WeightBase::Natural => natural,
            WeightBase::Two => natural / std::f64::consts::LN_2,
        }
    }

    fn label(self) -> &'static str {
        match self {
            WeightBase::Natural => "nats",
            WeightBase::Two => "bits",
        }
    }
}

/// Standard error and intervals attached to one reported quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub target: String,
    pub se: f64,
    pub level: f64,
    pub normal_ci: (f64, f64),
    pub percentile_ci: (f64, f64),
}

/// Linkage parameters and error rates for one neighbourhood definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkageReport {
    pub e_p: f64,
    pub e_lambda: f64,
    pub m_probability: f64,
    pub u_probability: f64,
    /// Natural-log linkage weight.
    pub weight: f64,
    pub match_prob: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub n: u64,
    pub n_minus_1: u64,
    #[serde(default)]
    pub weight_base: WeightBase,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<Interval>,
}

impl LinkageReport {
    pub fn from_expectations(e_p: f64, e_lambda: f64, n: u64) -> Result<Self> {
        let nm1 = check_population(n)?;
        let rates = ErrorRates::from_expectations(e_p, e_lambda, n)?;
        Ok(Self {
            e_p,
            e_lambda,
            m_probability: e_p,
            u_probability: e_lambda / nm1,
            weight: weight_from_expectations(e_p, e_lambda, n)?,
            match_prob: match_probability_from_expectations(e_p, e_lambda),
            fnr: rates.fnr,
            fpr: rates.fpr,
            n,
            n_minus_1: n - 1,
            weight_base: WeightBase::Natural,
            intervals: Vec::new(),
        })
    }

    pub fn from_params(params: &MixtureParams, n: u64) -> Result<Self> {
        Self::from_expectations(params.expected_p(), params.expected_lambda(), n)
    }

    pub fn with_weight_base(mut self, base: WeightBase) -> Self {
        self.weight_base = base;
        self
    }
}

impl fmt::Display for LinkageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22}{:>16}", "quantity", "estimate")?;
        writeln!(f, "{:<22}{:>16}", "N", self.n)?;
        writeln!(f, "{:<22}{:>16}", "N-1", self.n_minus_1)?;
        writeln!(f, "{:<22}{:>16.4}", "E[p]", self.e_p)?;
        writeln!(f, "{:<22}{:>16.4}", "E[lambda]", self.e_lambda)?;
        writeln!(f, "{:<22}{:>16.4E}", "m-probability", self.m_probability)?;
        writeln!(f, "{:<22}{:>16.4E}", "u-probability", self.u_probability)?;
        let w = format!("weight ({})", self.weight_base.label());
        writeln!(f, "{:<22}{:>16.4}", w, self.weight_base.convert(self.weight))?;
        writeln!(f, "{:<22}{:>16.4}", "match probability", self.match_prob)?;
        writeln!(f, "{:<22}{:>16.4}", "FNR", self.fnr)?;
        writeln!(f, "{:<22}{:>16.4E}", "FPR", self.fpr)?;
        if !self.intervals.is_empty() {
            writeln!(f)?;
            writeln!(
                f,
                "{:<12}{:>12}{:>28}{:>28}",
                "target", "SE", "normal CI", "percentile CI"
            )?;
            for iv in &self.intervals {
                writeln!(
                    f,
                    "{:<12}{:>12.5}{:>28}{:>28}",
                    iv.target,
                    iv.se,
                    format!("({:.4E}, {:.4E})", iv.normal_ci.0, iv.normal_ci.1),
                    format!("({:.4E}, {:.4E})", iv.percentile_ci.0, iv.percentile_ci.1),
                )?;
            }
        }
        Ok(())
    }
}
