use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate, true_parameters, SimConfig, TrueParams};
use crate::ci_baseline::{build_comparison_frequencies, fit_ci, CiConfig};
use crate::em::{fit, FitConfig};
use crate::error::{invalid, Result};
use crate::neighbourhood::{count_neighbours, recommended_sample_size, srs_sample, NeighbourhoodSpec};
use crate::rng::derive_seed;
use crate::stats::{anderson_darling, mean, normal_scores, sd};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub sim: SimConfig,
    pub reps: usize,
    /// Component counts fitted on every repetition.
    pub g_list: Vec<usize>,
    /// Sample size is `m_factor * ceil(N^(2/5))`.
    pub m_factor: f64,
    /// Also fit the conditional-independence baseline on the full cross
    /// product.
    pub include_ci: bool,
    pub fit: FitConfig,
    pub ci: CiConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::scenario1(),
            reps: 100,
            g_list: (1..=5).collect(),
            m_factor: 2.0,
            include_ci: true,
            fit: FitConfig::default(),
            ci: CiConfig::default(),
        }
    }
}

const CI_LABEL: &str = "ci";
const MIXTURE_LABEL: &str = "mixture";

/// Accuracy of one estimator for one target over the repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub estimator: String,
    pub g: Option<usize>,
    pub target: String,
    pub truth: f64,
    pub mean: f64,
    /// Relative bias in percent of the true value.
    pub bias_pct: f64,
    pub se: f64,
    pub mse: f64,
    pub failures: usize,
    /// Anderson–Darling normality p-value of the estimates.
    pub normality_p: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub rep: usize,
    pub estimator: String,
    pub target: String,
    pub standardized_value: f64,
    pub normal_quantile: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Estimate {
    estimator: String,
    g: Option<usize>,
    values: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub truth: TrueParams,
    pub m: u64,
    pub reps: usize,
    pub rows: Vec<StudyRow>,
    pub qq: Vec<QqRow>,
}

impl StudyResult {
    pub fn row(&self, estimator: &str, g: Option<usize>, target: &str) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.g == g && r.target == target)
    }

    pub fn mixture(&self, g: usize, target: &str) -> Option<&StudyRow> {
        self.row(MIXTURE_LABEL, Some(g), target)
    }

    pub fn ci(&self, target: &str) -> Option<&StudyRow> {
        self.row(CI_LABEL, None, target)
    }

    /// Columns `estimator, G, target, bias_pct, se, mse, failures`.
    pub fn write_table<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["estimator", "G", "target", "bias_pct", "se", "mse", "failures"])?;
        for r in &self.rows {
            wtr.write_record([
                r.estimator.clone(),
                r.g.map(|g| g.to_string()).unwrap_or_default(),
                r.target.clone(),
                r.bias_pct.to_string(),
                r.se.to_string(),
                r.mse.to_string(),
                r.failures.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Columns `rep, estimator, target, standardized_value, normal_quantile`.
    pub fn write_qq<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["rep", "estimator", "target", "standardized_value", "normal_quantile"])?;
        for q in &self.qq {
            wtr.write_record([
                q.rep.to_string(),
                q.estimator.clone(),
                q.target.clone(),
                q.standardized_value.to_string(),
                q.normal_quantile.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn run_repetition(config: &StudyConfig, m: u64, seed: u64) -> Result<Vec<Estimate>> {
    let sim = SimConfig {
        seed: derive_seed(seed, 0),
        ..config.sim.clone()
    };
    let (a, b) = generate(&sim)?;
    let full = count_neighbours(&a, &b, &NeighbourhoodSpec::ExactMatchAll)?.unsplit();
    let sample = srs_sample(&full, m, derive_seed(seed, 1))?;

    let mut out: Vec<Estimate> = config
        .g_list
        .par_iter()
        .map(|&g| {
            let cfg = FitConfig {
                seed: derive_seed(seed, 2 + g as u64),
                ..config.fit
            };
            let values = match fit(&sample, g, &cfg) {
                Ok(f) => Some((f.params.expected_p(), f.params.expected_lambda())),
                Err(e) => {
                    log::debug!("G = {g} fit failed: {e}");
                    None
                }
            };
            Estimate {
                estimator: MIXTURE_LABEL.into(),
                g: Some(g),
                values,
            }
        })
        .collect();
    if config.include_ci {
        let table = build_comparison_frequencies(&a, &b)?;
        let values = fit_ci(&table, sim.n, &config.ci).ok().map(|f| f.params.expectations());
        out.push(Estimate {
            estimator: CI_LABEL.into(),
            g: None,
            values,
        });
    }
    Ok(out)
}

fn label(estimator: &str, g: Option<usize>) -> String {
    match g {
        Some(g) => format!("{estimator}_g{g}"),
        None => estimator.to_string(),
    }
}

/// Repeats generate, count, sample and fit `reps` times and scores every
/// estimator against the oracle values. Repetition `r` draws all of its
/// randomness from `derive_seed(seed, r)`.
pub fn run_study(config: &StudyConfig, seed: u64) -> Result<StudyResult> {
    if config.reps < 2 {
        return Err(invalid("reps", "at least 2 repetitions are required"));
    }
    if config.g_list.is_empty() && !config.include_ci {
        return Err(invalid("g_list", "nothing to estimate"));
    }
    config.sim.validate()?;
    let truth = true_parameters(&config.sim)?;
    let m = recommended_sample_size(config.sim.n, config.m_factor)?;
    if m > config.sim.n {
        return Err(invalid("m_factor", format!("sample size {m} exceeds the population")));
    }

    let per_rep: Vec<Vec<Estimate>> = (0..config.reps)
        .into_par_iter()
        .map(|r| run_repetition(config, m, derive_seed(seed, r as u64)))
        .collect::<Result<_>>()?;

    let mut cells: Vec<(String, Option<usize>)> = config
        .g_list
        .iter()
        .map(|&g| (MIXTURE_LABEL.to_string(), Some(g)))
        .collect();
    if config.include_ci {
        cells.push((CI_LABEL.to_string(), None));
    }
    let mut rows = Vec::new();
    let mut qq = Vec::new();
    for (ci, (estimator, g)) in cells.iter().enumerate() {
        for (target, pick, true_value) in [("E[p]", 0usize, truth.e_p), ("E[lambda]", 1usize, truth.e_lambda)] {
            let indexed: Vec<(usize, f64)> = per_rep
                .iter()
                .enumerate()
                .filter_map(|(r, ests)| ests[ci].values.map(|v| (r, if pick == 0 { v.0 } else { v.1 })))
                .collect();
            let values: Vec<f64> = indexed.iter().map(|x| x.1).collect();
            let failures = config.reps - values.len();
            let avg = mean(&values);
            let spread = sd(&values);
            rows.push(StudyRow {
                estimator: estimator.clone(),
                g: *g,
                target: target.into(),
                truth: true_value,
                mean: avg,
                bias_pct: 100.0 * (avg - true_value) / true_value,
                se: spread,
                mse: values.iter().map(|v| (v - true_value).powi(2)).sum::<f64>() / values.len() as f64,
                failures,
                normality_p: anderson_darling(&values).map(|ad| ad.p_value),
            });
            if spread > 0.0 {
                let mut order: Vec<usize> = (0..indexed.len()).collect();
                order.sort_by(|&i, &j| indexed[i].1.total_cmp(&indexed[j].1));
                let scores = normal_scores(indexed.len());
                let mut rank = vec![0; indexed.len()];
                for (pos, &i) in order.iter().enumerate() {
                    rank[i] = pos;
                }
                for (i, &(rep, v)) in indexed.iter().enumerate() {
                    qq.push(QqRow {
                        rep,
                        estimator: label(estimator, *g),
                        target: target.into(),
                        standardized_value: (v - avg) / spread,
                        normal_quantile: scores[rank[i]],
                    });
                }
            }
        }
    }
    Ok(StudyResult {
        truth,
        m,
        reps: config.reps,
        rows,
        qq,
    })
}
