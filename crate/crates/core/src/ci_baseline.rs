//! Classical latent-class EM for binary comparison vectors under
//! conditional independence, with the match proportion fixed at `1/N`.
//!
//! The EM runs on pattern counts over the full cross product of two files,
//! never on the pairs themselves.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::neighbourhood::RecordTable;

/// Largest field count for which the dense binary path is used.
const DENSE_MAX_FIELDS: usize = 20;
/// Pattern bitmasks are stored in a `u64`.
pub const MAX_FIELDS: usize = 63;

/// Counts of agreement patterns over all pairs of two files. Bit `k` of a
/// pattern is set when the pair agrees on field `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonFrequencyTable {
    fields: usize,
    rows: Vec<(u64, u64)>,
}

impl ComparisonFrequencyTable {
    /// Builds a table from `(pattern, count)` pairs, merging repeats and
    /// dropping zero counts.
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(fields: usize, counts: I) -> Result<Self> {
        if fields == 0 || fields > MAX_FIELDS {
            return Err(invalid("fields", format!("must be between 1 and {MAX_FIELDS}")));
        }
        let mut map: HashMap<u64, u64> = HashMap::new();
        for (pattern, count) in counts {
            if fields < 64 && pattern >> fields != 0 {
                return Err(invalid(
                    "pattern",
                    format!("{pattern:#b} has bits beyond {fields} fields"),
                ));
            }
            if count > 0 {
                *map.entry(pattern).or_insert(0) += count;
            }
        }
        let mut rows: Vec<_> = map.into_iter().collect();
        rows.sort_unstable();
        Ok(Self { fields, rows })
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn rows(&self) -> &[(u64, u64)] {
        &self.rows
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().map(|r| r.1).sum()
    }

    pub fn count(&self, pattern: u64) -> u64 {
        self.rows
            .binary_search_by_key(&pattern, |r| r.0)
            .map_or(0, |i| self.rows[i].1)
    }

    /// Field `k` is the `k`-th character.
    pub fn pattern_to_bits(&self, pattern: u64) -> String {
        (0..self.fields)
            .map(|k| if pattern >> k & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn bits_to_pattern(bits: &str) -> Result<u64> {
        let mut pattern = 0u64;
        for (k, c) in bits.chars().enumerate() {
            match c {
                '1' => pattern |= 1 << k,
                '0' => {}
                _ => return Err(Error::Parse(format!("`{bits}` is not a bitstring"))),
            }
        }
        Ok(pattern)
    }

    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        wtr.write_record(["pattern", "count"])?;
        for &(p, c) in &self.rows {
            wtr.write_record([self.pattern_to_bits(p), c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_delimited<R: Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut fields = None;
        let mut counts = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let bits = rec.get(0).unwrap_or("");
            let width = bits.chars().count();
            if *fields.get_or_insert(width) != width {
                return Err(Error::ArityMismatch {
                    expected: fields.unwrap(),
                    found: width,
                });
            }
            let raw = rec.get(1).unwrap_or("");
            let count = raw
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("`{raw}` is not a count")))?;
            counts.push((Self::bits_to_pattern(bits)?, count));
        }
        Self::from_counts(fields.ok_or(Error::Empty("comparison table"))?, counts)
    }
}

/// Integer codes per field, shared between both files.
fn encode<'a>(a: &'a RecordTable, b: &'a RecordTable) -> (Vec<Vec<u32>>, Vec<Vec<u32>>, Vec<usize>) {
    let mut dicts: Vec<HashMap<&'a str, u32>> = vec![HashMap::new(); a.arity()];
    let mut enc = |t: &'a RecordTable| -> Vec<Vec<u32>> {
        t.records()
            .map(|r| {
                r.iter()
                    .zip(dicts.iter_mut())
                    .map(|(v, d)| {
                        let next = d.len() as u32;
                        *d.entry(v.as_str()).or_insert(next)
                    })
                    .collect()
            })
            .collect()
    };
    let ea = enc(a);
    let eb = enc(b);
    let sizes = dicts.iter().map(HashMap::len).collect();
    (ea, eb, sizes)
}

fn histogram(codes: &[Vec<u32>]) -> HashMap<&[u32], u64> {
    let mut h: HashMap<&[u32], u64> = HashMap::new();
    for c in codes {
        *h.entry(c.as_slice()).or_insert(0) += 1;
    }
    h
}

/// In-place Walsh–Hadamard transform, unnormalized.
fn walsh_hadamard(v: &mut [i128]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
}

/// Pattern counts over binary fields as an exact XOR convolution of the two
/// files' value histograms.
fn binary_frequencies(ea: &[Vec<u32>], eb: &[Vec<u32>], fields: usize) -> Vec<(u64, u64)> {
    let size = 1usize << fields;
    let mask = |c: &Vec<u32>| c.iter().enumerate().fold(0usize, |m, (k, &v)| m | ((v as usize) << k));
    let mut ha = vec![0i128; size];
    let mut hb = vec![0i128; size];
    for c in ea {
        ha[mask(c)] += 1;
    }
    for c in eb {
        hb[mask(c)] += 1;
    }
    walsh_hadamard(&mut ha);
    walsh_hadamard(&mut hb);
    for (x, y) in ha.iter_mut().zip(&hb) {
        *x *= *y;
    }
    walsh_hadamard(&mut ha);
    let full = (size - 1) as u64;
    ha.iter()
        .enumerate()
        .filter(|(_, &c)| c != 0)
        .map(|(diff, &c)| (!(diff as u64) & full, (c / size as i128) as u64))
        .collect()
}

/// Pattern counts by pairing every distinct A value with every distinct
/// B value.
fn cross_product_frequencies(ea: &[Vec<u32>], eb: &[Vec<u32>]) -> Vec<(u64, u64)> {
    let mut da: Vec<(&[u32], u64)> = histogram(ea).into_iter().collect();
    let mut db: Vec<(&[u32], u64)> = histogram(eb).into_iter().collect();
    da.sort_unstable();
    db.sort_unstable();
    let merged = da
        .par_chunks(64)
        .map(|chunk| {
            let mut acc: HashMap<u64, u64> = HashMap::new();
            for (va, fa) in chunk {
                for (vb, fb) in &db {
                    let pattern = va
                        .iter()
                        .zip(vb.iter())
                        .enumerate()
                        .fold(0u64, |p, (k, (x, y))| p | (u64::from(x == y) << k));
                    *acc.entry(pattern).or_insert(0) += fa * fb;
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (p, c) in b {
                *a.entry(p).or_insert(0) += c;
            }
            a
        });
    merged.into_iter().collect()
}

/// Counts agreement patterns over all `N_A * N_B` pairs without
/// materializing them.
pub fn build_comparison_frequencies(a: &RecordTable, b: &RecordTable) -> Result<ComparisonFrequencyTable> {
    if a.arity() != b.arity() {
        return Err(Error::ArityMismatch {
            expected: a.arity(),
            found: b.arity(),
        });
    }
    let fields = a.arity();
    if fields > MAX_FIELDS {
        return Err(invalid(
            "fields",
            format!("at most {MAX_FIELDS} comparison fields are supported"),
        ));
    }
    let (ea, eb, sizes) = encode(a, b);
    let rows = if fields <= DENSE_MAX_FIELDS && sizes.iter().all(|&s| s <= 2) {
        binary_frequencies(&ea, &eb, fields)
    } else {
        cross_product_frequencies(&ea, &eb)
    };
    ComparisonFrequencyTable::from_counts(fields, rows)
}

/// Agreement probabilities per field given match status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiParams {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    /// Population size; the match proportion is `1/n`.
    pub n: u64,
}

impl CiParams {
    /// `(E[p], E[lambda])`: the probability that a matched pair agrees on
    /// every field, and `N - 1` times that probability for an unmatched pair.
    pub fn expectations(&self) -> (f64, f64) {
        let e_p = self.m.iter().product();
        let e_lambda = (self.n - 1) as f64 * self.u.iter().product::<f64>();
        (e_p, e_lambda)
    }
}

pub fn derive_expectations(params: &CiParams) -> (f64, f64) {
    params.expectations()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Starting value of every m-probability.
    pub init_m: f64,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            rel_tol: 1e-8,
            init_m: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiFit {
    pub params: CiParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when the two classes cannot be told apart: a single observed
    /// pattern, or fewer than three fields (more parameters than degrees of
    /// freedom).
    pub identified: bool,
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

/// Per-field `(ln q, ln(1 - q))`.
fn log_table(probs: &[f64]) -> Vec<(f64, f64)> {
    probs.iter().map(|&q| (q.ln(), (1.0 - q).ln())).collect()
}

fn ln_class(logs: &[(f64, f64)], pattern: u64) -> f64 {
    logs.iter()
        .enumerate()
        .map(|(k, &(agree, differ))| if pattern >> k & 1 == 1 { agree } else { differ })
        .sum()
}

/// Posterior match probability of every row and the log-likelihood.
fn e_step(table: &ComparisonFrequencyTable, m: &[f64], u: &[f64], n: u64) -> (Vec<f64>, f64) {
    let ln_prior_m = -(n as f64).ln();
    let ln_prior_u = ((n - 1) as f64 / n as f64).ln();
    let (log_m, log_u) = (log_table(m), log_table(u));
    let mut loglik = 0.0;
    let post = table
        .rows()
        .iter()
        .map(|&(pattern, count)| {
            let lm = ln_class(&log_m, pattern) + ln_prior_m;
            let lu = ln_class(&log_u, pattern) + ln_prior_u;
            let hi = lm.max(lu);
            let (ll, post) = if hi == f64::NEG_INFINITY {
                (crate::mixture::LOG_GUARD.ln(), 0.0)
            } else {
                let s = (lm - hi).exp() + (lu - hi).exp();
                (hi + s.ln(), (lm - hi).exp() / s)
            };
            loglik += count as f64 * ll;
            post
        })
        .collect();
    (post, loglik)
}

fn m_step(table: &ComparisonFrequencyTable, post: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = table.fields();
    let mut agree_m = vec![0.0; k];
    let mut agree_u = vec![0.0; k];
    let mut wm = 0.0;
    let mut wu = 0.0;
    for (&(pattern, count), &pm) in table.rows().iter().zip(post) {
        let c = count as f64;
        let (cm, cu) = (c * pm, c * (1.0 - pm));
        wm += cm;
        wu += cu;
        for f in 0..k {
            if pattern >> f & 1 == 1 {
                agree_m[f] += cm;
                agree_u[f] += cu;
            }
        }
    }
    let ratio = |x: Vec<f64>, w: f64| {
        x.into_iter()
            .map(|v| if w > 0.0 { (v / w).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    };
    (ratio(agree_m, wm), ratio(agree_u, wu))
}

/// Fits the two-class model with the match proportion held at `1/n`.
/// Starts from `m_k = init_m` and `u_k` equal to the overall agreement rate
/// of field `k`; stops when no parameter moves by more than `rel_tol`
/// relative to its previous value.
pub fn fit_ci(table: &ComparisonFrequencyTable, n: u64, config: &CiConfig) -> Result<CiFit> {
    if n < 2 {
        return Err(invalid("n", "population size must be at least 2"));
    }
    if table.rows().is_empty() {
        return Err(Error::Empty("comparison table"));
    }
    if !(0.0..=1.0).contains(&config.init_m) {
        return Err(invalid("init_m", "must be a probability"));
    }
    let k = table.fields();
    let total = table.total() as f64;
    let mut u: Vec<f64> = (0..k)
        .map(|f| {
            table
                .rows()
                .iter()
                .filter(|r| r.0 >> f & 1 == 1)
                .map(|r| r.1 as f64)
                .sum::<f64>()
                / total
        })
        .collect();
    let mut m = vec![config.init_m; k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let (post, ll) = e_step(table, &m, &u, n);
        trace.push(ll);
        let (m_new, u_new) = m_step(table, &post);
        iterations += 1;
        let moved = m
            .iter()
            .chain(&u)
            .zip(m_new.iter().chain(&u_new))
            .any(|(old, new)| (new - old).abs() > config.rel_tol * old.abs().max(crate::em::CONVERGENCE_EPS));
        m = m_new;
        u = u_new;
        if !moved {
            converged = true;
            break;
        }
    }
    let (_, loglik) = e_step(table, &m, &u, n);
    Ok(CiFit {
        params: CiParams { m, u, n },
        loglik,
        iterations,
        converged,
        identified: table.rows().len() > 1 && k >= 3,
        loglik_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn table(rows: &[Vec<&str>]) -> RecordTable {
        let k = rows[0].len();
        RecordTable::new(
            (0..k).map(|i| format!("v{i}")).collect(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            None,
        )
        .unwrap()
    }

    fn random_table(rng: &mut crate::rng::Rng, n: usize, k: usize, levels: u32) -> RecordTable {
        let rows: Vec<Vec<String>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(0..levels).to_string()).collect())
            .collect();
        RecordTable::new((0..k).map(|i| format!("v{i}")).collect(), rows, None).unwrap()
    }

    // Pattern counts straight from the pair list.
    fn enumerate_pairs(a: &RecordTable, b: &RecordTable) -> Vec<u64> {
        let mut out = Vec::new();
        for ra in a.records() {
            for rb in b.records() {
                out.push(
                    ra.iter()
                        .zip(rb)
                        .enumerate()
                        .fold(0, |p, (k, (x, y))| p | (u64::from(x == y) << k)),
                );
            }
        }
        out
    }

    #[test]
    fn single_field_enumeration() {
        let t = build_comparison_frequencies(&table(&[vec!["0"]]), &table(&[vec!["0"], vec!["1"]])).unwrap();
        assert_eq!(t.rows(), &[(0, 1), (1, 1)]);
    }

    #[test]
    fn distinct_values_against_themselves() {
        let n = 7;
        let rows: Vec<Vec<String>> = (0..n).map(|i| vec![i.to_string()]).collect();
        let a = RecordTable::new(vec!["v".into()], rows, None).unwrap();
        let t = build_comparison_frequencies(&a, &a).unwrap();
        assert_eq!(t.count(1), n);
        assert_eq!(t.count(0), n * n - n);
    }

    #[test]
    fn binary_and_general_paths_agree_with_enumeration() {
        let mut rng = seeded(3);
        for (levels, k) in [(2, 6), (3, 4), (2, 1), (5, 2)] {
            let a = random_table(&mut rng, 40, k, levels);
            let b = random_table(&mut rng, 35, k, levels);
            let t = build_comparison_frequencies(&a, &b).unwrap();
            let oracle =
                ComparisonFrequencyTable::from_counts(k, enumerate_pairs(&a, &b).into_iter().map(|p| (p, 1))).unwrap();
            assert_eq!(t, oracle, "levels {levels}, k {k}");
            assert_eq!(t.total(), 40 * 35);
            assert!(t.rows().len() <= 1 << k);
        }
    }

    #[test]
    fn table_round_trip_and_bit_order() {
        let t = ComparisonFrequencyTable::from_counts(3, [(0b001, 4), (0b110, 2)]).unwrap();
        let mut buf = Vec::new();
        t.write_delimited(&mut buf, b',').unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "pattern,count
100,4
011,2
"
        );
        assert_eq!(
            ComparisonFrequencyTable::read_delimited(buf.as_slice(), b',').unwrap(),
            t
        );
        assert!(ComparisonFrequencyTable::from_counts(2, [(0b100, 1)]).is_err());
        assert!(build_comparison_frequencies(&table(&[vec!["0"]]), &table(&[vec!["0", "1"]])).is_err());
    }

    #[test]
    fn expectation_mapping() {
        let p = CiParams {
            m: vec![1.0; 4],
            u: vec![0.5; 15],
            n: 32_000,
        };
        assert_eq!(p.expectations().0, 1.0);
        let p = CiParams {
            m: vec![0.8],
            u: vec![0.5; 15],
            n: 32_000,
        };
        let (e_p, e_lambda) = derive_expectations(&p);
        assert_eq!(e_p, 0.8);
        assert_relative_eq!(e_lambda, 31_999.0 / 32_768.0, max_relative = 1e-15);
    }

    #[test]
    fn identical_files() {
        let rows: Vec<Vec<String>> = (0..50)
            .map(|i| vec![i.to_string(), (i * 7).to_string(), format!("x{i}")])
            .collect();
        let a = RecordTable::new(vec!["a".into(), "b".into(), "c".into()], rows, None).unwrap();
        let t = build_comparison_frequencies(&a, &a).unwrap();
        let fit = fit_ci(&t, 50, &CiConfig::default()).unwrap();
        assert!(fit.identified);
        assert!(fit.params.m.iter().all(|&m| m > 0.999), "{:?}", fit.params);
    }

    #[test]
    fn one_field_fit_lands_on_the_likelihood_ridge() {
        // One field gives one degree of freedom for two parameters: any
        // (m, u) reproducing the observed agreement rate is a maximizer.
        let rows: Vec<Vec<String>> = (0..50).map(|i| vec![i.to_string()]).collect();
        let a = RecordTable::new(vec!["v".into()], rows, None).unwrap();
        let t = build_comparison_frequencies(&a, &a).unwrap();
        let fit = fit_ci(&t, 50, &CiConfig::default()).unwrap();
        assert!(!fit.identified);
        let rate = fit.params.m[0] / 50.0 + fit.params.u[0] * 49.0 / 50.0;
        assert_relative_eq!(rate, 50.0 / 2500.0, max_relative = 1e-6);
    }

    #[test]
    fn single_pattern_is_not_identified() {
        let t = ComparisonFrequencyTable::from_counts(3, [(0b111, 9)]).unwrap();
        let fit = fit_ci(&t, 3, &CiConfig::default()).unwrap();
        assert!(!fit.identified);
        assert!(fit_ci(&t, 1, &CiConfig::default()).is_err());
    }

    #[test]
    fn recovers_product_of_m_probabilities() {
        // 15 uniform binary fields, each recorded with a 5% flip rate.
        let (n, k) = (32_000usize, 15usize);
        let mut rng = seeded(11);
        let a: Vec<Vec<String>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(0..2u8).to_string()).collect())
            .collect();
        let b: Vec<Vec<String>> = a
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| {
                        if rng.random_bool(0.05) {
                            if v == "0" {
                                "1".into()
                            } else {
                                "0".into()
                            }
                        } else {
                            v.clone()
                        }
                    })
                    .collect()
            })
            .collect();
        let names: Vec<String> = (0..k).map(|i| format!("v{i}")).collect();
        let ta = RecordTable::new(names.clone(), a, None).unwrap();
        let tb = RecordTable::new(names, b, None).unwrap();
        let t = build_comparison_frequencies(&ta, &tb).unwrap();
        assert_eq!(t.total(), (n * n) as u64);
        let fit = fit_ci(&t, n as u64, &CiConfig::default()).unwrap();
        let truth = 0.95f64.powi(15);
        let (e_p, _) = fit.params.expectations();
        assert!((e_p / truth - 1.0).abs() < 0.05, "{e_p} vs {truth}");
    }

    // Direct EM over an explicit pair list, one row per pair.
    fn pairwise_em(patterns: &[u64], k: usize, n: u64, iters: usize) -> (Vec<f64>, Vec<f64>) {
        let total = patterns.len() as f64;
        let mut u: Vec<f64> = (0..k)
            .map(|f| patterns.iter().filter(|&&p| p >> f & 1 == 1).count() as f64 / total)
            .collect();
        let mut m = vec![0.9; k];
        let prior = 1.0 / n as f64;
        for _ in 0..iters {
            let post: Vec<f64> = patterns
                .iter()
                .map(|&p| {
                    let lik = |q: &[f64]| {
                        (0..k)
                            .map(|f| if p >> f & 1 == 1 { q[f] } else { 1.0 - q[f] })
                            .product::<f64>()
                    };
                    let (a, b) = (prior * lik(&m), (1.0 - prior) * lik(&u));
                    a / (a + b)
                })
                .collect();
            let wm: f64 = post.iter().sum();
            let wu = total - wm;
            for f in 0..k {
                let am: f64 = patterns
                    .iter()
                    .zip(&post)
                    .filter(|(p, _)| *p >> f & 1 == 1)
                    .map(|(_, q)| q)
                    .sum();
                let au: f64 = patterns
                    .iter()
                    .zip(&post)
                    .filter(|(p, _)| *p >> f & 1 == 1)
                    .map(|(_, q)| 1.0 - q)
                    .sum();
                m[f] = am / wm;
                u[f] = au / wu;
            }
        }
        (m, u)
    }

    #[test]
    fn aggregated_fit_equals_pairwise_fit() {
        let mut rng = seeded(8);
        let a = random_table(&mut rng, 60, 4, 2);
        let b = RecordTable::new(
            a.fields().to_vec(),
            a.records()
                .map(|r| {
                    r.iter()
                        .map(|v| {
                            if rng.random_bool(0.1) {
                                "x".to_string()
                            } else {
                                v.clone()
                            }
                        })
                        .collect()
                })
                .collect(),
            None,
        )
        .unwrap();
        let t = build_comparison_frequencies(&a, &b).unwrap();
        let config = CiConfig {
            max_iter: 50,
            rel_tol: 0.0,
            ..CiConfig::default()
        };
        let fit = fit_ci(&t, 60, &config).unwrap();
        let (m, u) = pairwise_em(&enumerate_pairs(&a, &b), 4, 60, 50);
        for f in 0..4 {
            assert!(
                (fit.params.m[f] - m[f]).abs() < 1e-10,
                "{} vs {}",
                fit.params.m[f],
                m[f]
            );
            assert!((fit.params.u[f] - u[f]).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn em_ascends_and_stays_in_range(seed in 0u64..10_000, k in 1usize..6, n in 2u64..500) {
            let mut rng = seeded(seed);
            let rows: Vec<(u64, u64)> = (0..(1u64 << k)).map(|p| (p, rng.random_range(0..200u64))).collect();
            prop_assume!(rows.iter().any(|r| r.1 > 0));
            let t = ComparisonFrequencyTable::from_counts(k, rows).unwrap();
            let fit = fit_ci(&t, n, &CiConfig { max_iter: 200, ..CiConfig::default() }).unwrap();
            for w in fit.loglik_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
            prop_assert!(fit.params.m.iter().chain(&fit.params.u).all(|q| (0.0..=1.0).contains(q)));
        }
    }
}
