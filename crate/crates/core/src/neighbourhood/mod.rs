//! Neighbourhood definitions, per-record neighbour counts and the
//! sub-square-root random sample the estimator is fitted on.
//!
//! A neighbourhood maps each record value to the set of B-file values that
//! resemble it. Every definition must contain the value itself. Exact
//! matching and blocking keys are counted through a hash index over B;
//! arbitrary predicates are evaluated pair by pair.

mod key;
mod records;
mod sampling;

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::NeighbourCountSample;
use crate::error::{invalid, Error, Result};

pub use key::{soundex, KeyPart, Transform};
pub use records::RecordTable;
pub use sampling::{
    empirical_independence_check, lag1_autocorrelation, recommended_sample_size, srs_records, srs_sample,
    IndependenceCheck,
};

type PredicateFn = dyn Fn(&[String], &[String]) -> bool + Send + Sync;

/// A user supplied binary predicate. It must be reflexive.
#[derive(Clone)]
pub struct CustomPredicate {
    name: String,
    f: Arc<PredicateFn>,
}

impl CustomPredicate {
    pub fn new(name: impl Into<String>, f: impl Fn(&[String], &[String]) -> bool + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for CustomPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CustomPredicate").field(&self.name).finish()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    /// At least `min` fields agree exactly.
    AgreeAtLeast { min: usize },
    #[serde(skip)]
    Custom(CustomPredicate),
}

impl Predicate {
    pub fn name(&self) -> String {
        match self {
            Predicate::AgreeAtLeast { min } => format!("agree_at_least({min})"),
            Predicate::Custom(c) => c.name.clone(),
        }
    }

    pub fn eval(&self, a: &[String], b: &[String]) -> bool {
        match self {
            Predicate::AgreeAtLeast { min } => a.iter().zip(b).filter(|(x, y)| x == y).count() >= *min,
            Predicate::Custom(c) => (c.f)(a, b),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NeighbourhoodSpec {
    /// Every field agrees.
    ExactMatchAll,
    /// The concatenated transformed key parts agree.
    BlockingKey {
        parts: Vec<KeyPart>,
    },
    Predicate {
        predicate: Predicate,
    },
}

impl NeighbourhoodSpec {
    fn validate(&self, arity: usize) -> Result<()> {
        match self {
            NeighbourhoodSpec::ExactMatchAll => Ok(()),
            NeighbourhoodSpec::BlockingKey { parts } => {
                if parts.is_empty() {
                    return Err(invalid("parts", "a blocking key needs at least one part"));
                }
                if let Some(p) = parts.iter().find(|p| p.field >= arity) {
                    return Err(invalid(
                        "parts",
                        format!("field {} out of range for arity {arity}", p.field),
                    ));
                }
                Ok(())
            }
            NeighbourhoodSpec::Predicate {
                predicate: Predicate::AgreeAtLeast { min },
            } if *min > arity => Err(invalid("min", format!("{min} exceeds the arity {arity}"))),
            NeighbourhoodSpec::Predicate { .. } => Ok(()),
        }
    }

    /// Whether `b` lies in the neighbourhood of `a`.
    pub fn contains(&self, a: &[String], b: &[String]) -> bool {
        match self {
            NeighbourhoodSpec::ExactMatchAll => a == b,
            NeighbourhoodSpec::BlockingKey { parts } => parts.iter().all(|p| p.apply(a) == p.apply(b)),
            NeighbourhoodSpec::Predicate { predicate } => predicate.eval(a, b),
        }
    }
}

/// Neighbour counts in A-record order, with the matched indicator when
/// both files carry truth ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordCounts {
    pub counts: Vec<u64>,
    pub matched: Option<Vec<bool>>,
}

impl RecordCounts {
    pub fn to_sample(&self) -> NeighbourCountSample {
        match &self.matched {
            Some(m) => NeighbourCountSample::from_split(self.counts.iter().zip(m).map(|(&n, &b)| (n, b, 1)))
                .expect("matched records are their own neighbours"),
            None => NeighbourCountSample::from_counts(&self.counts),
        }
    }

    /// Counts of the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            counts: indices.iter().map(|&i| self.counts[i]).collect(),
            matched: self.matched.as_ref().map(|m| indices.iter().map(|&i| m[i]).collect()),
        }
    }
}

fn count_by_key<'a, K, F>(a: &'a RecordTable, b: &'a RecordTable, key: F) -> Vec<u64>
where
    K: Hash + Eq + Send + Sync,
    F: Fn(&'a [String]) -> K + Sync,
{
    let mut index: HashMap<K, u64> = HashMap::with_capacity(b.len());
    for rec in b.records() {
        *index.entry(key(rec)).or_insert(0) += 1;
    }
    (0..a.len())
        .into_par_iter()
        .map(|i| index.get(&key(a.record(i))).copied().unwrap_or(0))
        .collect()
}

/// Counts, for every record of `a`, the records of `b` in its neighbourhood.
pub fn count_per_record(a: &RecordTable, b: &RecordTable, spec: &NeighbourhoodSpec) -> Result<RecordCounts> {
    if a.arity() != b.arity() {
        return Err(Error::ArityMismatch {
            expected: a.arity(),
            found: b.arity(),
        });
    }
    spec.validate(a.arity())?;
    a.check_unique_truth()?;
    b.check_unique_truth()?;

    let counts = match spec {
        NeighbourhoodSpec::ExactMatchAll => count_by_key(a, b, |r| r),
        NeighbourhoodSpec::BlockingKey { parts } => {
            count_by_key(a, b, |r| parts.iter().map(|p| p.apply(r)).collect::<Vec<_>>())
        }
        NeighbourhoodSpec::Predicate { predicate } => {
            if let Some(i) = (0..a.len()).find(|&i| !predicate.eval(a.record(i), a.record(i))) {
                return Err(Error::NotReflexive(format!("{} on record {i}", predicate.name())));
            }
            log::warn!(
                "predicate neighbourhood `{}` evaluates all {} x {} pairs",
                predicate.name(),
                a.len(),
                b.len()
            );
            (0..a.len())
                .into_par_iter()
                .map(|i| {
                    let ra = a.record(i);
                    b.records().filter(|rb| predicate.eval(ra, rb)).count() as u64
                })
                .collect()
        }
    };

    let matched = match (a.truth_ids(), b.truth_ids()) {
        (Some(ta), Some(tb)) => {
            let by_id: HashMap<&str, usize> = tb.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
            Some(
                ta.iter()
                    .enumerate()
                    .map(|(i, id)| {
                        by_id
                            .get(id.as_str())
                            .is_some_and(|&j| spec.contains(a.record(i), b.record(j)))
                    })
                    .collect(),
            )
        }
        _ => None,
    };
    Ok(RecordCounts { counts, matched })
}

/// Neighbour counts of every A-record as a frequency sample.
pub fn count_neighbours(a: &RecordTable, b: &RecordTable, spec: &NeighbourhoodSpec) -> Result<NeighbourCountSample> {
    Ok(count_per_record(a, b, spec)?.to_sample())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[&[&str]], truth: Option<&[&str]>) -> RecordTable {
        let k = rows.first().map_or(1, |r| r.len());
        RecordTable::new(
            (0..k).map(|i| format!("f{i}")).collect(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            truth.map(|t| t.iter().map(|s| s.to_string()).collect()),
        )
        .unwrap()
    }

    #[test]
    fn exact_match_counts() {
        let a = table(&[&["x"], &["y"]], None);
        let b = table(&[&["x"], &["x"], &["z"]], None);
        let c = count_per_record(&a, &b, &NeighbourhoodSpec::ExactMatchAll).unwrap();
        assert_eq!(c.counts, vec![2, 0]);
        assert!(c.matched.is_none());
    }

    #[test]
    fn self_linkage_of_distinct_records() {
        let a = table(&[&["a", "1"], &["b", "1"], &["a", "2"]], None);
        let s = count_neighbours(&a, &a, &NeighbourhoodSpec::ExactMatchAll).unwrap();
        assert_eq!(s.distinct(), vec![(1, 3)]);
    }

    #[test]
    fn disjoint_values_have_no_neighbours() {
        let a = table(&[&["a"], &["b"]], None);
        let b = table(&[&["c"], &["d"]], None);
        let s = count_neighbours(&a, &b, &NeighbourhoodSpec::ExactMatchAll).unwrap();
        assert_eq!(s.distinct(), vec![(0, 2)]);
    }

    #[test]
    fn truth_split() {
        let a = table(&[&["x"], &["y"], &["q"]], Some(&["1", "2", "3"]));
        let b = table(&[&["x"], &["x"], &["z"]], Some(&["2", "1", "3"]));
        let c = count_per_record(&a, &b, &NeighbourhoodSpec::ExactMatchAll).unwrap();
        assert_eq!(c.counts, vec![2, 0, 0]);
        assert_eq!(c.matched, Some(vec![true, false, false]));
        let s = c.to_sample();
        for e in s.entries() {
            assert_eq!(e.n_matched().unwrap() + e.n_unmatched().unwrap(), e.n);
        }
    }

    #[test]
    fn errors() {
        let a = table(&[&["x"]], Some(&["1"]));
        let b2 = table(&[&["x", "y"]], None);
        assert!(matches!(
            count_neighbours(&a, &b2, &NeighbourhoodSpec::ExactMatchAll),
            Err(Error::ArityMismatch { .. })
        ));
        let dup = table(&[&["x"], &["y"]], Some(&["1", "1"]));
        assert!(matches!(
            count_neighbours(&a, &dup, &NeighbourhoodSpec::ExactMatchAll),
            Err(Error::DuplicateTruthId(_))
        ));
        let never = Predicate::Custom(CustomPredicate::new("never", |_, _| false));
        assert!(matches!(
            count_neighbours(&a, &a, &NeighbourhoodSpec::Predicate { predicate: never }),
            Err(Error::NotReflexive(_))
        ));
        let bad_key = NeighbourhoodSpec::BlockingKey {
            parts: vec![KeyPart::field(3)],
        };
        assert!(count_neighbours(&a, &a, &bad_key).is_err());
    }

    #[test]
    fn blocking_key_with_transforms() {
        let a = table(&[&["Robert", "1985"], &["Lee", "1990"]], None);
        let b = table(
            &[
                &["Rupert", "1985"],
                &["Rubin", "1985"],
                &["Lea", "1990"],
                &["Robert", "1986"],
            ],
            None,
        );
        let spec = NeighbourhoodSpec::BlockingKey {
            parts: vec![KeyPart::field(0).with(Transform::Soundex), KeyPart::field(1)],
        };
        assert_eq!(count_per_record(&a, &b, &spec).unwrap().counts, vec![1, 1]);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = NeighbourhoodSpec::BlockingKey {
            parts: vec![KeyPart::field(2).with(Transform::Substring { start: 0, len: 3 })],
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: NeighbourhoodSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(format!("{back:?}"), format!("{spec:?}"));
        let p: NeighbourhoodSpec =
            serde_json::from_str(r#"{"kind":"predicate","predicate":{"kind":"agree_at_least","min":2}}"#).unwrap();
        assert!(matches!(
            p,
            NeighbourhoodSpec::Predicate {
                predicate: Predicate::AgreeAtLeast { min: 2 }
            }
        ));
    }

    fn small_table(max_len: usize) -> impl Strategy<Value = RecordTable> {
        prop::collection::vec(prop::collection::vec(0u8..3, 2), 1..max_len).prop_map(|rows| {
            RecordTable::new(
                vec!["a".into(), "b".into()],
                rows.into_iter()
                    .map(|r| r.into_iter().map(|v| v.to_string()).collect())
                    .collect(),
                None,
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn indexed_counts_equal_pairwise_counts(a in small_table(30), b in small_table(30)) {
            let specs = [
                NeighbourhoodSpec::ExactMatchAll,
                NeighbourhoodSpec::BlockingKey { parts: vec![KeyPart::field(1)] },
            ];
            for spec in specs {
                let fast = count_per_record(&a, &b, &spec).unwrap().counts;
                let pred = Predicate::Custom(CustomPredicate::new("same", {
                    let spec = spec.clone();
                    move |x: &[String], y: &[String]| spec.contains(x, y)
                }));
                let slow = count_per_record(&a, &b, &NeighbourhoodSpec::Predicate { predicate: pred }).unwrap().counts;
                prop_assert_eq!(&fast, &slow);
                prop_assert_eq!(fast.len(), a.len());
            }
        }

        #[test]
        fn own_value_is_always_a_neighbour(a in small_table(30), min in 0usize..=2) {
            let specs = [
                NeighbourhoodSpec::ExactMatchAll,
                NeighbourhoodSpec::BlockingKey { parts: vec![KeyPart::field(0).with(Transform::Soundex)] },
                NeighbourhoodSpec::Predicate { predicate: Predicate::AgreeAtLeast { min } },
            ];
            for spec in specs {
                let c = count_per_record(&a, &a, &spec).unwrap();
                prop_assert!(c.counts.iter().all(|&n| n >= 1));
                prop_assert_eq!(c.to_sample().m(), a.len() as u64);
            }
        }
    }
}
