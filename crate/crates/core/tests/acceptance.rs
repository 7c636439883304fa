//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line straight to
//! stderr (so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use linkerr::em::{initialize, run_em};
use linkerr::inference::{bootstrap, lrt_statistic, parametric_bootstrap_lrt};
use linkerr::mixture::{canonicalize, component_pmf, sample_counts, ComponentParams, MixtureParams};
use linkerr::neighbourhood::{
    count_per_record, empirical_independence_check, recommended_sample_size, NeighbourhoodSpec,
};
use linkerr::rng::{derive_seed, seeded};
use linkerr::simgen::{generate, run_study, SimConfig, StudyConfig};
use linkerr::stats::sd;
use linkerr::{fit, FitConfig, LinkageReport};
use rand::Rng;

fn verdict(id: u32, name: &str, pass: bool, elapsed: Duration, detail: &str) {
    let line = format!(
        "[acceptance {id:>2}] {} {name} ({:.1}s): {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn random_mixture(rng: &mut impl Rng, max_g: usize, max_lambda: f64) -> MixtureParams {
    let g = rng.random_range(1..=max_g);
    let raw: Vec<ComponentParams> = (0..g)
        .map(|_| {
            ComponentParams::new(
                rng.random_range(0.05..1.0),
                rng.random_range(0.0..=1.0),
                rng.random_range(1e-3..=max_lambda),
            )
        })
        .collect();
    let total: f64 = raw.iter().map(|c| c.alpha).sum();
    let raw: Vec<ComponentParams> = raw
        .iter()
        .map(|c| ComponentParams::new(c.alpha / total, c.p, c.lambda))
        .collect();
    canonicalize(&raw).unwrap()
}

// Poisson pmf by the running product, independent of the log-space code.
fn poisson_table(lambda: f64, kmax: u64) -> Vec<f64> {
    let mut t = Vec::with_capacity(kmax as usize + 1);
    let mut v = (-lambda).exp();
    t.push(v);
    for k in 1..=kmax {
        v *= lambda / k as f64;
        t.push(v);
    }
    t
}

#[test]
fn criterion_01_pmf_matches_convolution() {
    let start = Instant::now();
    let mut rng = seeded(101);
    let mut worst_diff = 0.0f64;
    let mut worst_mass = 1.0f64;
    for _ in 0..100 {
        let params = random_mixture(&mut rng, 5, 10.0);
        let kstar = params.truncation_point();
        let mut mass = 0.0;
        let tables: Vec<Vec<f64>> = params
            .components()
            .iter()
            .map(|c| poisson_table(c.lambda, kstar))
            .collect();
        for k in 0..=kstar {
            let brute: f64 = params
                .components()
                .iter()
                .zip(&tables)
                .map(|(c, t)| {
                    let none = (1.0 - c.p) * t[k as usize];
                    let one = if k > 0 { c.p * t[k as usize - 1] } else { 0.0 };
                    c.alpha * (none + one)
                })
                .sum();
            let got = params.pmf(k);
            worst_diff = worst_diff.max((got - brute).abs());
            mass += got;
        }
        worst_mass = worst_mass.min(mass);
    }
    let elapsed = start.elapsed();
    let pass = worst_diff < 1e-12 && worst_mass >= 1.0 - 1e-8 && elapsed < Duration::from_secs(10);
    verdict(
        1,
        "mixture pmf equals Bernoulli-Poisson convolution",
        pass,
        elapsed,
        &format!("max |diff| {worst_diff:.2e}, min truncated mass {worst_mass:.12}"),
    );
}

#[test]
fn criterion_02_merged_and_split_parameterizations_agree() {
    let start = Instant::now();
    let mut rng = seeded(202);
    let mut worst = 0.0f64;
    let mut idempotent = true;
    for _ in 0..200 {
        let params = random_mixture(&mut rng, 5, 10.0);
        // split every component into two copies with random weight shares
        let mut split = Vec::new();
        for c in params.components() {
            let share = rng.random_range(0.1..0.9);
            split.push(ComponentParams::new(c.alpha * share, c.p, c.lambda));
            split.push(ComponentParams::new(c.alpha * (1.0 - share), c.p, c.lambda));
        }
        let kstar = params.truncation_point();
        for k in 0..=kstar {
            let unmerged: f64 = split.iter().map(|c| c.alpha * component_pmf(c.p, c.lambda, k)).sum();
            worst = worst.max((unmerged - params.pmf(k)).abs());
        }
        let merged = canonicalize(&split).unwrap();
        idempotent &= merged.len() == params.len();
        idempotent &= canonicalize(merged.components()).unwrap() == merged;
        idempotent &= canonicalize(params.components()).unwrap() == params;
    }
    let elapsed = start.elapsed();
    let pass = worst < 1e-12 && idempotent && elapsed < Duration::from_secs(1);
    verdict(
        2,
        "identification invariants",
        pass,
        elapsed,
        &format!("sup |pmf diff| {worst:.2e}, canonical form idempotent: {idempotent}"),
    );
}

#[test]
fn criterion_03_em_never_decreases_likelihood() {
    let start = Instant::now();
    let mut rng = seeded(303);
    let mut worst_drop = 0.0f64;
    let mut instances = 0;
    let config = FitConfig::default();
    while instances < 100 {
        let truth = random_mixture(&mut rng, 4, 10.0);
        let m = rng.random_range(20..=10_000u64);
        let sample = sample_counts(&truth, m, rng.random()).unwrap();
        let g = rng.random_range(1..=5usize);
        let Ok(init) = initialize(&sample, g, &config.init) else {
            continue;
        };
        let r = run_em(&init, &sample, &config).unwrap();
        for w in r.loglik_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        instances += 1;
    }
    let elapsed = start.elapsed();
    let pass = worst_drop <= 1e-9 && elapsed < Duration::from_secs(60);
    verdict(
        3,
        "EM log-likelihood is monotone",
        pass,
        elapsed,
        &format!("{instances} instances, largest per-iteration decrease {worst_drop:.2e}"),
    );
}

#[test]
fn criterion_04_parameter_recovery() {
    let start = Instant::now();
    let truth = canonicalize(&[ComponentParams::new(0.5, 0.9, 0.5), ComponentParams::new(0.5, 0.1, 8.0)]).unwrap();
    let (e_p, e_lambda) = (truth.expected_p(), truth.expected_lambda());
    let mut passing = 0;
    let mut errors = Vec::new();
    for s in 0..20u64 {
        let sample = sample_counts(&truth, 100_000, derive_seed(404, s)).unwrap();
        let config = FitConfig {
            seed: derive_seed(405, s),
            ..FitConfig::default()
        };
        let f = fit(&sample, 2, &config).unwrap();
        let dp = f.params.expected_p() - e_p;
        let dl = f.params.expected_lambda() / e_lambda - 1.0;
        if dp.abs() <= 0.02 && dl.abs() <= 0.02 {
            passing += 1;
        }
        errors.push(format!("{dp:+.3}/{:+.1}%", 100.0 * dl));
    }
    let elapsed = start.elapsed();
    let pass = passing >= 18 && elapsed < Duration::from_secs(120);
    verdict(
        4,
        "parameter recovery at m = 1e5",
        pass,
        elapsed,
        &format!(
            "{passing}/20 seeds within tolerance; E[p] abs / E[lambda] rel errors: {}",
            errors.join(" ")
        ),
    );
}

fn reduced_study(sim: SimConfig, g: usize, reps: usize, include_ci: bool) -> StudyConfig {
    StudyConfig {
        sim,
        reps,
        g_list: vec![g],
        m_factor: 2.0,
        include_ci,
        ..StudyConfig::default()
    }
}

#[test]
fn criterion_05_homogeneous_scenario_bias() {
    let start = Instant::now();
    let r = run_study(&reduced_study(SimConfig::scenario1(), 4, 30, true), 505).unwrap();
    let bp = r.mixture(4, "E[p]").unwrap();
    let bl = r.mixture(4, "E[lambda]").unwrap();
    let ci = r.ci("E[p]").unwrap();
    let elapsed = start.elapsed();
    let pass = r.m == 128
        && bp.bias_pct.abs() <= 10.0
        && bl.bias_pct.abs() <= 10.0
        && ci.bias_pct.abs() <= 6.0
        && elapsed < Duration::from_secs(20 * 60);
    verdict(
        5,
        "scenario 1 relative bias, 30 repetitions",
        pass,
        elapsed,
        &format!(
            "m = {}; mixture G=4 E[p] {:+.2}% ({} failed), E[lambda] {:+.2}%; baseline E[p] {:+.2}%",
            r.m, bp.bias_pct, bp.failures, bl.bias_pct, ci.bias_pct
        ),
    );
}

#[test]
fn criterion_06_heterogeneous_scenario_bias() {
    let start = Instant::now();
    let r = run_study(&reduced_study(SimConfig::scenario2(), 3, 30, true), 606).unwrap();
    let bp = r.mixture(3, "E[p]").unwrap();
    let bl = r.mixture(3, "E[lambda]").unwrap();
    let ci = r.ci("E[lambda]").unwrap();
    let elapsed = start.elapsed();
    let pass = (-40.0..=-15.0).contains(&ci.bias_pct)
        && bp.bias_pct.abs() <= 12.0
        && bl.bias_pct.abs() <= 12.0
        && elapsed < Duration::from_secs(20 * 60);
    verdict(
        6,
        "scenario 2 bias signature, 30 repetitions",
        pass,
        elapsed,
        &format!(
            "baseline E[lambda] {:+.2}%; mixture G=3 E[p] {:+.2}% ({} failed), E[lambda] {:+.2}%",
            ci.bias_pct, bp.bias_pct, bp.failures, bl.bias_pct
        ),
    );
}

#[test]
fn criterion_07_error_rate_mapping() {
    let start = Instant::now();
    let r = LinkageReport::from_expectations(0.8644, 3.3403, 23_900_000).unwrap();
    let pass = (r.fnr - 0.1356).abs() <= 1e-12 && (r.fpr - 1.3976e-7).abs() <= 1e-10;
    verdict(
        7,
        "error-rate mapping",
        pass,
        start.elapsed(),
        &format!("FNR {:.12}, FPR {:.6e}", r.fnr, r.fpr),
    );
}

#[test]
fn criterion_08_sample_size_rule() {
    let start = Instant::now();
    let a = recommended_sample_size(32_000, 2.0).unwrap();
    let b = recommended_sample_size(23_900_000, 1.0).unwrap();
    verdict(
        8,
        "sample-size rule",
        a == 128 && b == 895,
        start.elapsed(),
        &format!("m(32000, 2) = {a}, m(23.9e6, 1) = {b}"),
    );
}

#[test]
fn criterion_09_lrt_decision_and_size() {
    let start = Instant::now();
    // tabulated row: statistic 0.00732 against critical level 0.01468
    let stat = lrt_statistic(-1000.0, -1000.0 + 0.00732 / 2.0);
    let tabulated_accept = (stat.value - 0.00732).abs() < 1e-9 && !(stat.value > 0.01468);

    let truth = MixtureParams::single(0.9, 1.0).unwrap();
    let trials = 100;
    let mut rejections = 0;
    for t in 0..trials as u64 {
        let sample = sample_counts(&truth, 500, derive_seed(909, t)).unwrap();
        let config = FitConfig {
            seed: derive_seed(910, t),
            ..FitConfig::default()
        };
        let r = parametric_bootstrap_lrt(&sample, 1, 2, 100, 0.05, derive_seed(911, t), &config).unwrap();
        rejections += usize::from(r.reject);
    }
    let rate = rejections as f64 / trials as f64;
    let elapsed = start.elapsed();
    let pass = tabulated_accept && (rate - 0.05).abs() <= 0.05 && elapsed < Duration::from_secs(15 * 60);
    verdict(
        9,
        "LRT decision and size",
        pass,
        elapsed,
        &format!("tabulated row accepted: {tabulated_accept}; rejection rate under the null {rate:.2} over {trials} trials, B = 100"),
    );
}

#[test]
fn criterion_10_sampled_counts_look_independent() {
    let start = Instant::now();
    let sim = SimConfig {
        seed: 1010,
        ..SimConfig::scenario1()
    };
    let (a, b) = generate(&sim).unwrap();
    let counts = count_per_record(&a, &b, &NeighbourhoodSpec::ExactMatchAll)
        .unwrap()
        .counts;
    let check = empirical_independence_check(&counts, 128, 100, 1011).unwrap();
    let below = check.count_below(0.1);
    let elapsed = start.elapsed();
    verdict(
        10,
        "lag-1 autocorrelation of sampled counts",
        below >= 95,
        elapsed,
        &format!(
            "|rho| < 0.1 in {below}/100 repetitions (mean rho {:+.4}, max |rho| {:.3})",
            check.mean_rho, check.statistic
        ),
    );
}

#[test]
fn criterion_11_estimates_are_normal() {
    let start = Instant::now();
    let r = run_study(&reduced_study(SimConfig::scenario1(), 4, 100, false), 1111).unwrap();
    let p = r.mixture(4, "E[p]").unwrap();
    let l = r.mixture(4, "E[lambda]").unwrap();
    let ok = |row: &linkerr::simgen::StudyRow| row.normality_p.is_some_and(|pv| pv > 0.01);
    let elapsed = start.elapsed();
    verdict(
        11,
        "Anderson-Darling normality of G=4 estimates",
        ok(p) && ok(l),
        elapsed,
        &format!(
            "p-values E[p] {:?}, E[lambda] {:?} ({} and {} failed fits)",
            p.normality_p, l.normality_p, p.failures, l.failures
        ),
    );
}

#[test]
fn criterion_12_bootstrap_se_matches_monte_carlo() {
    let start = Instant::now();
    let truth = MixtureParams::single(0.9, 1.0).unwrap();
    let config = FitConfig::default();
    let (mut ps, mut ls) = (Vec::new(), Vec::new());
    for s in 0..200u64 {
        let sample = sample_counts(&truth, 128, derive_seed(1212, s)).unwrap();
        let f = fit(&sample, 1, &config).unwrap();
        ps.push(f.params.expected_p());
        ls.push(f.params.expected_lambda());
    }
    let (sd_p, sd_l) = (sd(&ps), sd(&ls));
    let sample = sample_counts(&truth, 128, 1213).unwrap();
    let b = bootstrap(&sample, 1, 250, 0.05, 1214, &config, None).unwrap();
    let se_p = b.interval("E[p]").unwrap().se;
    let se_l = b.interval("E[lambda]").unwrap().se;
    let (rp, rl) = (se_p / sd_p, se_l / sd_l);
    let elapsed = start.elapsed();
    let pass = (rp - 1.0).abs() <= 0.3 && (rl - 1.0).abs() <= 0.3 && elapsed < Duration::from_secs(600);
    verdict(
        12,
        "bootstrap SE against Monte Carlo SD",
        pass,
        elapsed,
        &format!(
            "E[p] SE {se_p:.4} vs SD {sd_p:.4} (ratio {rp:.2}); E[lambda] SE {se_l:.4} vs SD {sd_l:.4} (ratio {rl:.2})"
        ),
    );
}
