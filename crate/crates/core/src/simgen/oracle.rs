use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{logistic, SimConfig};
use crate::error::Result;
use crate::rng::{derive_seed, seeded};
use crate::stats::{mean, normal_quadrature, sd};

const NODES: usize = 64;
const COARSE_NODES: usize = 32;
/// Relative gap between the coarse and fine rules above which the Monte
/// Carlo fallback is used.
const QUADRATURE_TOL: f64 = 1e-8;
const MONTE_CARLO_DRAWS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Quadrature,
    MonteCarlo,
}

/// Population values of `E[p]` and `E[lambda]` under exact matching on
/// every field, with an error estimate for each: the coarse/fine rule gap
/// for quadrature, the standard error for Monte Carlo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub e_p: f64,
    pub e_lambda: f64,
    pub method: OracleMethod,
    pub e_p_error: f64,
    pub e_lambda_error: f64,
}

/// Probability that the copy of a record with value propensity `mu_src` and
/// flip probability `flip` shows a 1 on a given field.
fn one_probability(mu_src: f64, flip: f64) -> f64 {
    mu_src * (1.0 - flip) + (1.0 - mu_src) * flip
}

/// Chance that one field of a first-register record with propensity `mu`
/// agrees with a second-register record showing 1 with probability `q`.
fn field_agreement(mu: f64, q: f64) -> f64 {
    mu * q + (1.0 - mu) * (1.0 - q)
}

fn quadrature(config: &SimConfig, nodes: usize) -> (f64, f64) {
    let (z, w) = normal_quadrature(nodes);
    let k = config.k as i32;
    let mu: Vec<f64> = z
        .iter()
        .map(|z| logistic(config.beta0 + config.beta1 * config.sigma_u * z))
        .collect();
    let flip: Vec<f64> = z
        .iter()
        .map(|z| logistic(config.beta0p + config.beta1p * config.sigma_up * z))
        .collect();

    let e_p: f64 = flip.iter().zip(&w).map(|(f, w)| w * (1.0 - f).powi(k)).sum();
    let mut agree = 0.0;
    for (mu_src, w_src) in mu.iter().zip(&w) {
        for (f, w_f) in flip.iter().zip(&w) {
            let q = one_probability(*mu_src, *f);
            let inner: f64 = mu
                .iter()
                .zip(&w)
                .map(|(m, w_a)| w_a * field_agreement(*m, q).powi(k))
                .sum();
            agree += w_src * w_f * inner;
        }
    }
    (e_p, (config.n - 1) as f64 * agree)
}

/// Latent-variable Monte Carlo estimate with `draws` samples.
pub fn true_parameters_monte_carlo(config: &SimConfig, draws: usize) -> Result<TrueParams> {
    config.validate()?;
    let mut rng = seeded(derive_seed(config.seed, 0x04ac1e));
    let k = config.k as i32;
    let mut ps = Vec::with_capacity(draws);
    let mut agrees = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let mu = logistic(config.beta0 + config.beta1 * config.sigma_u * z[0]);
        let mu_src = logistic(config.beta0 + config.beta1 * config.sigma_u * z[1]);
        let flip_src = logistic(config.beta0p + config.beta1p * config.sigma_up * z[2]);
        let flip = logistic(config.beta0p + config.beta1p * config.sigma_up * z[3]);
        ps.push((1.0 - flip).powi(k));
        agrees.push(field_agreement(mu, one_probability(mu_src, flip_src)).powi(k));
    }
    let root = (draws as f64).sqrt();
    let scale = (config.n - 1) as f64;
    Ok(TrueParams {
        e_p: mean(&ps),
        e_lambda: scale * mean(&agrees),
        method: OracleMethod::MonteCarlo,
        e_p_error: sd(&ps) / root,
        e_lambda_error: scale * sd(&agrees) / root,
    })
}

/// `E[p]` is the chance that no field of a record is flipped; `E[lambda]`
/// is `N - 1` times the chance that a record agrees on every field with the
/// copy of a different individual. Both are Gauss–Hermite integrals over
/// the latents, checked against a coarser rule; Monte Carlo takes over when
/// the two rules disagree.
pub fn true_parameters(config: &SimConfig) -> Result<TrueParams> {
    config.validate()?;
    let (p_fine, l_fine) = quadrature(config, NODES);
    let (p_coarse, l_coarse) = quadrature(config, COARSE_NODES);
    let p_err = (p_fine - p_coarse).abs();
    let l_err = (l_fine - l_coarse).abs();
    if p_err > QUADRATURE_TOL * p_fine.abs() || l_err > QUADRATURE_TOL * l_fine.abs() {
        log::warn!("quadrature did not settle (gaps {p_err:.3e}, {l_err:.3e}); using Monte Carlo");
        return true_parameters_monte_carlo(config, MONTE_CARLO_DRAWS);
    }
    Ok(TrueParams {
        e_p: p_fine,
        e_lambda: l_fine,
        method: OracleMethod::Quadrature,
        e_p_error: p_err,
        e_lambda_error: l_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Sum over the number of ones h in the first-register record: it agrees
    // with the copy when the copy shows ones exactly there.
    fn hamming_sum(mu: f64, q: f64, k: i32) -> f64 {
        let mut total = 0.0;
        let mut binom = 1.0;
        for h in 0..=k {
            if h > 0 {
                binom *= (k - h + 1) as f64 / h as f64;
            }
            total += binom * (mu * q).powi(h) * ((1.0 - mu) * (1.0 - q)).powi(k - h);
        }
        total
    }

    fn hamming_oracle(config: &SimConfig) -> f64 {
        let (z, w) = normal_quadrature(NODES);
        let mu = |z: f64| logistic(config.beta0 + config.beta1 * config.sigma_u * z);
        let flip = |z: f64| logistic(config.beta0p + config.beta1p * config.sigma_up * z);
        let mut s = 0.0;
        for (a, wa) in z.iter().zip(&w) {
            for (b, wb) in z.iter().zip(&w) {
                for (c, wc) in z.iter().zip(&w) {
                    let (src, f) = (mu(*b), flip(*c));
                    let q = src * (1.0 - f) + (1.0 - src) * f;
                    s += wa * wb * wc * hamming_sum(mu(*a), q, config.k as i32);
                }
            }
        }
        (config.n - 1) as f64 * s
    }

    #[test]
    fn homogeneous_closed_forms() {
        let t = true_parameters(&SimConfig::scenario1()).unwrap();
        assert_eq!(t.method, OracleMethod::Quadrature);
        let e_p = (1.0 - logistic(-5.0)).powi(15);
        assert!((t.e_p - e_p).abs() < 1e-10);
        assert!((e_p - 0.90418).abs() < 5e-6);
        assert!((logistic(-5.0) - 0.0066929).abs() < 1e-7);
        assert!((t.e_lambda - 31_999.0 / 32_768.0).abs() < 1e-10);
        assert!((t.e_lambda - 0.976532).abs() < 1e-6);
    }

    #[test]
    fn collapsed_integrand_matches_hamming_sum() {
        for config in [SimConfig::scenario1(), SimConfig::scenario2()] {
            let t = true_parameters(&config).unwrap();
            let oracle = hamming_oracle(&config);
            assert!((t.e_lambda / oracle - 1.0).abs() < 1e-10, "{} vs {oracle}", t.e_lambda);
        }
    }

    #[test]
    fn quadrature_and_monte_carlo_agree() {
        for config in [SimConfig::scenario1(), SimConfig::scenario2()] {
            let q = true_parameters(&config).unwrap();
            let mc = true_parameters_monte_carlo(&config, 400_000).unwrap();
            // the homogeneous integrands are constant; allow for weight rounding
            assert!((q.e_p - mc.e_p).abs() <= 3.0 * mc.e_p_error + 1e-10, "{q:?} {mc:?}");
            assert!(
                (q.e_lambda - mc.e_lambda).abs() <= 3.0 * mc.e_lambda_error + 1e-10,
                "{q:?} {mc:?}"
            );
        }
    }

    #[test]
    fn error_free_registers() {
        let config = SimConfig {
            beta0p: -60.0,
            ..SimConfig::scenario2()
        };
        assert!((true_parameters(&config).unwrap().e_p - 1.0).abs() < 1e-12);
    }
}
