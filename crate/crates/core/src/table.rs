//! Timepoint × variant count matrix shared by observed and simulated data.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;

/// Counts of each variant at each timepoint.
///
/// Rows follow `timepoints`, columns follow `variant_ids`. A table built by
/// this crate never contains an all-zero column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub timepoints: Vec<i64>,
    pub variant_ids: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl FrequencyTable {
    pub fn new(timepoints: Vec<i64>, variant_ids: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, CorpusError> {
        let table = FrequencyTable {
            timepoints,
            variant_ids,
            counts,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.counts.len() != self.timepoints.len() {
            return Err(CorpusError::Shape(format!(
                "{} rows for {} timepoints",
                self.counts.len(),
                self.timepoints.len()
            )));
        }
        let width = self.variant_ids.len();
        if let Some((i, row)) = self.counts.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(CorpusError::Shape(format!(
                "row {} has {} columns, expected {}",
                i,
                row.len(),
                width
            )));
        }
        let mut seen = HashSet::with_capacity(width);
        for id in &self.variant_ids {
            if id.is_empty() {
                return Err(CorpusError::Shape("empty variant id".into()));
            }
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::Shape(format!("duplicate variant id {id:?}")));
            }
        }
        Ok(())
    }

    pub fn n_timepoints(&self) -> usize {
        self.timepoints.len()
    }

    pub fn n_variants(&self) -> usize {
        self.variant_ids.len()
    }

    pub fn row(&self, t: usize) -> &[u64] {
        &self.counts[t]
    }

    pub fn row_sum(&self, t: usize) -> u64 {
        self.counts[t].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Number of positive-count variants at each timepoint.
    pub fn richness(&self) -> Vec<usize> {
        self.counts
            .iter()
            .map(|r| r.iter().filter(|&&c| c > 0).count())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0; self.n_variants()];
        for row in &self.counts {
            for (s, c) in sums.iter_mut().zip(row) {
                *s += c;
            }
        }
        sums
    }

    /// Writes `timepoint,<variant ids...>` followed by one row per timepoint.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = Vec::with_capacity(self.n_variants() + 1);
        header.push("timepoint".to_string());
        header.extend(self.variant_ids.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.timepoints.iter().zip(&self.counts) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(t.to_string());
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| CorpusError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut records = r.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(CorpusError::Empty),
        };
        if header.get(0) != Some("timepoint") {
            return Err(CorpusError::Malformed {
                line: 1,
                reason: "header must start with `timepoint`".into(),
            });
        }
        let variant_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut timepoints = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in records.enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != variant_ids.len() + 1 {
                return Err(CorpusError::Malformed {
                    line,
                    reason: format!("expected {} fields, found {}", variant_ids.len() + 1, rec.len()),
                });
            }
            let t = rec[0].trim().parse::<i64>().map_err(|_| CorpusError::Malformed {
                line,
                reason: format!("non-integer timepoint {:?}", &rec[0]),
            })?;
            let row = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim().parse::<u64>().map_err(|_| CorpusError::Malformed {
                        line,
                        reason: format!("invalid count {c:?}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            timepoints.push(t);
            counts.push(row);
        }
        if timepoints.is_empty() {
            return Err(CorpusError::Empty);
        }
        FrequencyTable::new(timepoints, variant_ids, counts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let table: FrequencyTable = serde_json::from_str(text).map_err(|e| CorpusError::Json(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    /// Loads a table from `.json` or CSV, picking the format by extension.
    pub fn load(path: &std::path::Path) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|e| CorpusError::Io(format!("{}: {}", path.display(), e)))?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            let text = String::from_utf8(bytes).map_err(|e| CorpusError::Json(e.to_string()))?;
            Self::from_json(&text)
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FrequencyTable {
        FrequencyTable::new(
            vec![1990, 1991],
            vec!["A".into(), "B, the \"break\"".into()],
            vec![vec![2, 0], vec![0, 1]],
        )
        .unwrap()
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv_string();
        assert_eq!(csv, "timepoint,A,\"B, the \"\"break\"\"\"\n1990,2,0\n1991,0,1\n");
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = FrequencyTable::new(vec![1], vec!["a".into()], vec![vec![1, 2]]).unwrap_err();
        assert!(matches!(err, CorpusError::Shape(_)));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let err = FrequencyTable::new(vec![1], vec!["a".into(), "a".into()], vec![vec![1, 2]]);
        assert!(err.is_err());
    }

    #[test]
    fn bad_count_reports_line() {
        let err = FrequencyTable::read_csv("timepoint,a\n1,2\n2,x\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    fn arb_table() -> impl Strategy<Value = FrequencyTable> {
        (1usize..5, 1usize..6).prop_flat_map(|(rows, cols)| {
            (
                prop::collection::vec(-3000i64..3000, rows),
                prop::collection::vec(prop::collection::vec(0u64..1_000_000, cols), rows),
                Just(cols),
            )
                .prop_map(|(ts, counts, cols)| {
                    let ids = (0..cols).map(|c| format!("v,{c}\"")).collect();
                    FrequencyTable::new(ts, ids, counts).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn csv_and_json_agree_bit_exactly(table in arb_table()) {
            let csv = table.to_csv_string();
            let json = table.to_json();
            let from_csv = FrequencyTable::read_csv(csv.as_bytes()).unwrap();
            let from_json = FrequencyTable::from_json(&json).unwrap();
            prop_assert_eq!(&from_csv, &table);
            prop_assert_eq!(from_json.to_csv_string(), csv);
            prop_assert_eq!(from_csv.to_json(), json);
        }
    }
}
