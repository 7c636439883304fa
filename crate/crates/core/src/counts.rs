//! Neighbour-count samples stored as value/frequency pairs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// One frequency class of a neighbour-count sample.
///
/// `matched` is present only when truth is known, in which case it is the
/// matched-neighbour indicator `n_m` and the unmatched count is `n - n_m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountEntry {
    pub n: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<bool>,
    pub freq: u64,
}

impl CountEntry {
    pub fn n_matched(&self) -> Option<u64> {
        self.matched.map(u64::from)
    }

    pub fn n_unmatched(&self) -> Option<u64> {
        self.matched.map(|m| self.n - u64::from(m))
    }
}

/// Sample of per-record neighbour counts, aggregated into frequency classes.
///
/// Entries are sorted by `(n, matched)` and keys are unique. Either every
/// entry carries the matched split or none does.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CountEntry>", into = "Vec<CountEntry>")]
pub struct NeighbourCountSample {
    entries: Vec<CountEntry>,
    total: u64,
}

impl NeighbourCountSample {
    /// Builds a sample from `(n, freq)` pairs. Repeated values are merged and
    /// zero frequencies dropped.
    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Self {
        let mut map = BTreeMap::new();
        for (n, freq) in pairs {
            if freq > 0 {
                *map.entry(n).or_insert(0u64) += freq;
            }
        }
        let entries: Vec<_> = map
            .into_iter()
            .map(|(n, freq)| CountEntry { n, matched: None, freq })
            .collect();
        Self::from_sorted(entries)
    }

    /// Builds a sample from raw per-record counts.
    pub fn from_counts(counts: &[u64]) -> Self {
        Self::from_pairs(counts.iter().map(|&n| (n, 1)))
    }

    /// Builds a split sample from `(n, matched, freq)` triples.
    pub fn from_split<I: IntoIterator<Item = (u64, bool, u64)>>(triples: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, matched, freq) in triples {
            if matched && n == 0 {
                return Err(invalid("matched", "a matched neighbour implies at least one neighbour"));
            }
            if freq > 0 {
                *map.entry((n, matched)).or_insert(0u64) += freq;
            }
        }
        let entries: Vec<_> = map
            .into_iter()
            .map(|((n, matched), freq)| CountEntry {
                n,
                matched: Some(matched),
                freq,
            })
            .collect();
        Ok(Self::from_sorted(entries))
    }

    /// Accepts arbitrary entries, validating the split invariants.
    pub fn from_entries(entries: Vec<CountEntry>) -> Result<Self> {
        let split = entries.first().map(|e| e.matched.is_some());
        if entries.iter().any(|e| Some(e.matched.is_some()) != split) {
            return Err(invalid("matched", "split present on some entries only"));
        }
        if split == Some(true) {
            Self::from_split(entries.iter().map(|e| (e.n, e.matched.unwrap(), e.freq)))
        } else {
            Ok(Self::from_pairs(entries.iter().map(|e| (e.n, e.freq))))
        }
    }

    fn from_sorted(entries: Vec<CountEntry>) -> Self {
        let total = entries.iter().map(|e| e.freq).sum();
        Self { entries, total }
    }

    pub fn entries(&self) -> &[CountEntry] {
        &self.entries
    }

    /// Sample size `m`, the total frequency.
    pub fn m(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn is_split(&self) -> bool {
        self.entries.first().is_some_and(|e| e.matched.is_some())
    }

    /// Frequencies aggregated over the split, one pair per distinct `n`.
    pub fn distinct(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == e.n => last.1 += e.freq,
                _ => out.push((e.n, e.freq)),
            }
        }
        out
    }

    /// Drops the truth split.
    pub fn unsplit(&self) -> Self {
        Self::from_pairs(self.distinct())
    }

    pub fn max_n(&self) -> Option<u64> {
        self.entries.last().map(|e| e.n)
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        let s: f64 = self.entries.iter().map(|e| e.n as f64 * e.freq as f64).sum();
        s / self.total as f64
    }

    /// Expands the frequency classes into one value per observation.
    pub fn expand(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.total as usize);
        for e in &self.entries {
            out.extend(std::iter::repeat_n(e.n, e.freq as usize));
        }
        out
    }

    /// Concatenates two samples.
    pub fn merged(&self, other: &Self) -> Result<Self> {
        if !self.is_empty() && !other.is_empty() && self.is_split() != other.is_split() {
            return Err(invalid("matched", "cannot merge split and unsplit samples"));
        }
        let mut all = self.entries.clone();
        all.extend_from_slice(&other.entries);
        Self::from_entries(all)
    }

    /// Reads a delimited `(n, freq)` table with a header row. A third
    /// `n_m` column, when present, is read as the matched split.
    pub fn read_delimited<R: Read>(reader: R, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
        let n_col = col(&["n", "n_i"]).ok_or_else(|| Error::Parse("missing `n` column".into()))?;
        let f_col = col(&["freq"]).ok_or_else(|| Error::Parse("missing `freq` column".into()))?;
        let m_col = col(&["n_m"]);

        let mut triples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<u64> {
                let raw = rec.get(i).unwrap_or("");
                raw.parse::<u64>()
                    .map_err(|_| Error::Parse(format!("row {}: `{raw}` is not a nonnegative integer", line + 2)))
            };
            let n = field(n_col)?;
            let freq = field(f_col)?;
            let matched = match m_col {
                Some(c) => match field(c)? {
                    0 => Some(false),
                    1 => Some(true),
                    v => return Err(Error::Parse(format!("row {}: n_m must be 0 or 1, got {v}", line + 2))),
                },
                None => None,
            };
            triples.push((n, matched, freq));
        }
        if m_col.is_some() {
            Self::from_split(triples.into_iter().map(|(n, m, f)| (n, m.unwrap(), f)))
        } else {
            Ok(Self::from_pairs(triples.into_iter().map(|(n, _, f)| (n, f))))
        }
    }

    /// Writes the two-column `(n, freq)` table, aggregated over any split.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        wtr.write_record(["n", "freq"])?;
        for (n, freq) in self.distinct() {
            wtr.write_record([n.to_string(), freq.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes `(n, n_m, n_u, freq)`; requires a split sample.
    pub fn write_split_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        if !self.is_split() {
            return Err(invalid("matched", "sample carries no truth split"));
        }
        let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        wtr.write_record(["n", "n_m", "n_u", "freq"])?;
        for e in &self.entries {
            wtr.write_record([
                e.n.to_string(),
                e.n_matched().unwrap().to_string(),
                e.n_unmatched().unwrap().to_string(),
                e.freq.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl TryFrom<Vec<CountEntry>> for NeighbourCountSample {
    type Error = Error;

    fn try_from(entries: Vec<CountEntry>) -> Result<Self> {
        Self::from_entries(entries)
    }
}

impl From<NeighbourCountSample> for Vec<CountEntry> {
    fn from(s: NeighbourCountSample) -> Self {
        s.entries
    }
}
