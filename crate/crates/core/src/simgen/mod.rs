//! Two-register simulator with latent record heterogeneity.
//!
//! Each individual `i` has `K` binary values drawn iid `Bernoulli(mu_i)`
//! with `mu_i = logistic(beta0 + beta1 u_i)` and `u_i ~ N(0, sigma_u^2)`.
//! The second register copies every record, flipping each value
//! independently with probability `logistic(beta0p + beta1p u'_i)`, and
//! lists the copies in random order.

mod oracle;
mod study;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::neighbourhood::RecordTable;
use crate::rng::{derive_seed, seeded};

pub use oracle::{true_parameters, true_parameters_monte_carlo, OracleMethod, TrueParams};
pub use study::{run_study, QqRow, StudyConfig, StudyResult, StudyRow};

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Population size, the number of records in each register.
    pub n: u64,
    /// Number of binary linkage variables.
    pub k: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub beta0p: f64,
    pub beta1p: f64,
    /// Spread of the value-propensity latent. Not fixed by the model; unit
    /// variance is the default since `beta1` carries the scale.
    pub sigma_u: f64,
    /// Spread of the recording-error latent, unit by default.
    pub sigma_up: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::scenario1()
    }
}

impl SimConfig {
    /// Homogeneous records and recording errors.
    pub fn scenario1() -> Self {
        Self {
            n: 32_000,
            k: 15,
            beta0: 0.0,
            beta1: 0.0,
            beta0p: -5.0,
            beta1p: 0.0,
            sigma_u: 1.0,
            sigma_up: 1.0,
            seed: 0,
        }
    }

    /// Heterogeneous values and recording errors dependent across fields.
    pub fn scenario2() -> Self {
        Self {
            beta1: 0.5,
            beta1p: -0.5,
            ..Self::scenario1()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "scenario1" => Some(Self::scenario1()),
            "scenario2" => Some(Self::scenario2()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", "population size must be at least 2"));
        }
        if self.k == 0 {
            return Err(invalid("k", "at least one variable is required"));
        }
        for (name, v) in [("sigma_u", self.sigma_u), ("sigma_up", self.sigma_up)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        for (name, v) in [
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("beta0p", self.beta0p),
            ("beta1p", self.beta1p),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn field_names(&self) -> Vec<String> {
        (1..=self.k).map(|k| format!("v{k}")).collect()
    }
}

/// Both registers. Record `i` of the first register has truth id `i`; the
/// second register carries the id of the record it was copied from.
pub fn generate(config: &SimConfig) -> Result<(RecordTable, RecordTable)> {
    config.validate()?;
    let n = config.n as usize;
    let k = config.k;
    let mut rng = seeded(derive_seed(config.seed, 0));
    let latent = Normal::new(0.0, config.sigma_u).expect("validated");
    let latent_err = Normal::new(0.0, config.sigma_up).expect("validated");

    let mut a_bits = vec![false; n * k];
    let mut b_bits = vec![false; n * k];
    for i in 0..n {
        let mu = logistic(config.beta0 + config.beta1 * latent.sample(&mut rng));
        let flip = logistic(config.beta0p + config.beta1p * latent_err.sample(&mut rng));
        for f in 0..k {
            let v = rng.random_bool(mu);
            a_bits[i * k + f] = v;
            b_bits[i * k + f] = v ^ rng.random_bool(flip);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let text = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    let a_values: Vec<String> = a_bits.iter().map(|&b| text(b)).collect();
    let mut b_values = Vec::with_capacity(n * k);
    for &src in &order {
        b_values.extend(b_bits[src * k..(src + 1) * k].iter().map(|&b| text(b)));
    }
    let a_ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let b_ids: Vec<String> = order.iter().map(|i| i.to_string()).collect();
    let fields = config.field_names();
    Ok((
        RecordTable::from_flat(fields.clone(), a_values, Some(a_ids))?,
        RecordTable::from_flat(fields, b_values, Some(b_ids))?,
    ))
}
