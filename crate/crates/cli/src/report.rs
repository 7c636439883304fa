use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use linkerr::ci_baseline::CiFit;
use linkerr::inference::{BootstrapResult, LrtResult};
use linkerr::simgen::{SimConfig, StudyResult, TrueParams};
use linkerr::{FitResult, LinkageReport};
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};

/// A finished run: the resolved configuration, the derived stage seeds and
/// the results.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Report {
    Simulate {
        config: RunConfig,
        seeds: BTreeMap<String, u64>,
        sim: SimConfig,
        truth: TrueParams,
        files: Vec<PathBuf>,
    },
    Fit {
        config: RunConfig,
        seeds: BTreeMap<String, u64>,
        m: u64,
        fit: FitResult,
        linkage: LinkageReport,
    },
    FitCi {
        config: RunConfig,
        seeds: BTreeMap<String, u64>,
        fit: CiFit,
        linkage: LinkageReport,
    },
    Bootstrap {
        config: RunConfig,
        seeds: BTreeMap<String, u64>,
        m: u64,
        g: usize,
        bootstrap: BootstrapResult,
        linkage: Option<LinkageReport>,
    },
    Lrt {
        config: RunConfig,
        seeds: BTreeMap<String, u64>,
        m: u64,
        tests: Vec<LrtResult>,
    },
    Study {
        config: RunConfig,
        seeds: BTreeMap<String, u64>,
        study: StudyResult,
    },
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Doc => {
                let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
                s.push('\n');
                s
            }
            Format::Table => self.table(),
        }
    }

    fn table(&self) -> String {
        let mut s = String::new();
        match self {
            Report::Simulate { sim, truth, files, .. } => {
                let _ = writeln!(s, "N = {}, K = {}", sim.n, sim.k);
                let _ = writeln!(
                    s,
                    "beta0 = {}, beta1 = {}, beta0' = {}, beta1' = {}",
                    sim.beta0, sim.beta1, sim.beta0p, sim.beta1p
                );
                let _ = writeln!(
                    s,
                    "true E[p] = {:.6}, true E[lambda] = {:.6}",
                    truth.e_p, truth.e_lambda
                );
                for f in files {
                    let _ = writeln!(s, "wrote {}", f.display());
                }
            }
            Report::Fit { m, fit, linkage, .. } => {
                let _ = writeln!(s, "sample size m = {m}, G = {}", fit.params.len());
                let _ = writeln!(
                    s,
                    "log-likelihood {:.6} after {} iterations{}",
                    fit.loglik,
                    fit.iterations,
                    if fit.converged { "" } else { " (not converged)" }
                );
                s.push('\n');
                components(&mut s, fit);
                s.push('\n');
                let _ = write!(s, "{linkage}");
            }
            Report::FitCi { fit, linkage, .. } => {
                let _ = writeln!(
                    s,
                    "log-likelihood {:.6} after {} iterations{}{}",
                    fit.loglik,
                    fit.iterations,
                    if fit.converged { "" } else { " (not converged)" },
                    if fit.identified { "" } else { " (not identified)" }
                );
                s.push('\n');
                let _ = writeln!(s, "{:>6}{:>14}{:>14}", "field", "m", "u");
                for (k, (m, u)) in fit.params.m.iter().zip(&fit.params.u).enumerate() {
                    let _ = writeln!(s, "{:>6}{:>14.6}{:>14.6}", k + 1, m, u);
                }
                s.push('\n');
                let _ = write!(s, "{linkage}");
            }
            Report::Bootstrap {
                m,
                g,
                bootstrap,
                linkage,
                ..
            } => {
                let _ = writeln!(
                    s,
                    "m = {m}, G = {g}, B = {} ({} dropped)",
                    bootstrap.b, bootstrap.dropped
                );
                s.push('\n');
                match linkage {
                    Some(l) => {
                        let _ = write!(s, "{l}");
                    }
                    None => {
                        let _ = writeln!(s, "E[p] = {:.4}, E[lambda] = {:.4}", bootstrap.e_p, bootstrap.e_lambda);
                        for iv in &bootstrap.intervals {
                            let _ = writeln!(
                                s,
                                "{:<12} SE {:.5}  normal ({:.4}, {:.4})  percentile ({:.4}, {:.4})",
                                iv.target,
                                iv.se,
                                iv.normal_ci.0,
                                iv.normal_ci.1,
                                iv.percentile_ci.0,
                                iv.percentile_ci.1
                            );
                        }
                    }
                }
            }
            Report::Lrt { m, tests, .. } => {
                if let Some(t) = tests.first() {
                    let _ = writeln!(s, "m = {m}, Gmax = {}, B = {}, alpha = {}", t.gmax, t.b, t.alpha);
                }
                let _ = writeln!(s, "{:>4}{:>14}{:>14}  decision", "G", "critical", "statistic");
                for t in tests {
                    let _ = writeln!(
                        s,
                        "{:>4}{:>14.5}{:>14.5}  {}",
                        t.g0,
                        t.critical_level,
                        t.statistic,
                        t.decision()
                    );
                }
            }
            Report::Study { study, .. } => {
                let _ = writeln!(
                    s,
                    "{} repetitions, m = {}; true E[p] = {:.5}, true E[lambda] = {:.5}",
                    study.reps, study.m, study.truth.e_p, study.truth.e_lambda
                );
                s.push('\n');
                let _ = writeln!(
                    s,
                    "{:<10}{:>4}  {:<10}{:>10}{:>12}{:>12}{:>10}",
                    "estimator", "G", "target", "bias %", "SE", "MSE", "failures"
                );
                for r in &study.rows {
                    let _ = writeln!(
                        s,
                        "{:<10}{:>4}  {:<10}{:>10.2}{:>12.5}{:>12.3E}{:>10}",
                        r.estimator,
                        r.g.map(|g| g.to_string()).unwrap_or_else(|| "-".into()),
                        r.target,
                        r.bias_pct,
                        r.se,
                        r.mse,
                        r.failures
                    );
                }
            }
        }
        s
    }
}

fn components(s: &mut String, fit: &FitResult) {
    let _ = writeln!(s, "{:>4}{:>12}{:>12}{:>12}", "g", "alpha", "p", "lambda");
    for (i, c) in fit.params.components().iter().enumerate() {
        let _ = writeln!(s, "{:>4}{:>12.5}{:>12.5}{:>12.5}", i + 1, c.alpha, c.p, c.lambda);
    }
}
