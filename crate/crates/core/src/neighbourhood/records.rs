use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{invalid, Error, Result};

/// A file of categorical records, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordTable {
    fields: Vec<String>,
    values: Vec<String>,
    truth: Option<Vec<String>>,
}

impl RecordTable {
    pub fn new(fields: Vec<String>, records: Vec<Vec<String>>, truth: Option<Vec<String>>) -> Result<Self> {
        let arity = fields.len();
        if arity == 0 {
            return Err(invalid("fields", "a record table needs at least one field"));
        }
        let mut values = Vec::with_capacity(arity * records.len());
        for rec in &records {
            if rec.len() != arity {
                return Err(Error::ArityMismatch {
                    expected: arity,
                    found: rec.len(),
                });
            }
            values.extend(rec.iter().cloned());
        }
        if let Some(t) = &truth {
            if t.len() != records.len() {
                return Err(invalid("truth_id", "one truth id per record is required"));
            }
        }
        Ok(Self { fields, values, truth })
    }

    /// Builds a table from already flattened row-major values.
    pub fn from_flat(fields: Vec<String>, values: Vec<String>, truth: Option<Vec<String>>) -> Result<Self> {
        let arity = fields.len();
        if arity == 0 || !values.len().is_multiple_of(arity) {
            return Err(invalid("fields", "value count is not a multiple of the arity"));
        }
        if let Some(t) = &truth {
            if t.len() * arity != values.len() {
                return Err(invalid("truth_id", "one truth id per record is required"));
            }
        }
        Ok(Self { fields, values, truth })
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn arity(&self) -> usize {
        self.fields.len()
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn record(&self, i: usize) -> &[String] {
        let k = self.arity();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &[String]> + '_ {
        self.values.chunks_exact(self.arity())
    }

    pub fn truth_ids(&self) -> Option<&[String]> {
        self.truth.as_deref()
    }

    /// Errors on the first repeated truth id.
    pub fn check_unique_truth(&self) -> Result<()> {
        if let Some(ids) = &self.truth {
            let mut seen = HashSet::with_capacity(ids.len());
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::DuplicateTruthId(id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Reads a delimited file with a header row. The column named
    /// `truth_column`, if present, is taken as the truth id; every other
    /// column is a linkage field.
    pub fn read_delimited<R: Read>(reader: R, delimiter: u8, truth_column: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let truth_col = truth_column.and_then(|name| headers.iter().position(|h| h == name));
        let fields: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| Some(i) != truth_col)
            .map(|(_, h)| h.to_string())
            .collect();
        if fields.is_empty() {
            return Err(Error::Parse("record file has no linkage fields".into()));
        }
        let mut values = Vec::new();
        let mut truth = truth_col.map(|_| Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return Err(Error::ArityMismatch {
                    expected: headers.len(),
                    found: rec.len(),
                });
            }
            for (i, v) in rec.iter().enumerate() {
                if Some(i) == truth_col {
                    truth.as_mut().unwrap().push(v.to_string());
                } else {
                    values.push(v.to_string());
                }
            }
        }
        Self::from_flat(fields, values, truth)
    }

    /// Writes the table with the truth id, when present, as the first column.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8, truth_column: &str) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        let mut header: Vec<&str> = Vec::with_capacity(self.arity() + 1);
        if self.truth.is_some() {
            header.push(truth_column);
        }
        header.extend(self.fields.iter().map(String::as_str));
        wtr.write_record(&header)?;
        for (i, rec) in self.records().enumerate() {
            let mut row: Vec<&str> = Vec::with_capacity(header.len());
            if let Some(t) = &self.truth {
                row.push(&t[i]);
            }
            row.extend(rec.iter().map(String::as_str));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn reads_truth_column_by_name() {
        let text = "a,id,b\nx,1,y\nz,2,w\n";
        let t = RecordTable::read_delimited(text.as_bytes(), b',', Some("id")).unwrap();
        assert_eq!(t.fields(), s(&["a", "b"]).as_slice());
        assert_eq!(t.record(1), s(&["z", "w"]).as_slice());
        assert_eq!(t.truth_ids().unwrap(), s(&["1", "2"]).as_slice());
        let mut out = Vec::new();
        t.write_delimited(&mut out, b',', "id").unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "id,a,b\n1,x,y\n2,z,w\n");
    }

    #[test]
    fn missing_truth_column_gives_plain_table() {
        let t = RecordTable::read_delimited("a;b\n1;2\n".as_bytes(), b';', Some("id")).unwrap();
        assert!(t.truth_ids().is_none());
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = RecordTable::new(s(&["a", "b"]), vec![s(&["1"])], None);
        assert!(matches!(err, Err(Error::ArityMismatch { expected: 2, found: 1 })));
        assert!(RecordTable::read_delimited("a,b\n1\n".as_bytes(), b',', None).is_err());
    }

    #[test]
    fn duplicate_truth_is_reported() {
        let t = RecordTable::new(s(&["a"]), vec![s(&["x"]), s(&["y"])], Some(s(&["7", "7"]))).unwrap();
        assert!(matches!(t.check_unique_truth(), Err(Error::DuplicateTruthId(id)) if id == "7"));
    }
}
