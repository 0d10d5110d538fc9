//! Adoption-event ingestion and the empirical population parameters.
//!
//! The event file is UTF-8 CSV with columns `timepoint,variant_id,adopter_id`.
//! The header line is optional; duplicate triples are kept.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::FrequencyTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("json error: {0}")]
    Json(String),
    #[error("empty input: no records")]
    Empty,
    #[error("malformed row, line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("non-integer timepoint, line {line}")]
    NonIntegerTimepoint { line: usize },
    #[error("invalid table shape: {0}")]
    Shape(String),
    #[error("empty timepoint range [{0}, {1}]")]
    EmptyRange(i64, i64),
    #[error("zero events retained in range")]
    NoEventsRetained,
    #[error("timepoint {0} has no events; choose a range without gaps")]
    MissingTimepoint(i64),
    #[error("need at least 2 timepoints, found {0}")]
    TooFewTimepoints(usize),
    #[error("timepoint {0} has zero total count")]
    ZeroRowSum(i64),
}

impl From<csv::Error> for CorpusError {
    fn from(e: csv::Error) -> Self {
        CorpusError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdoptionEvent {
    pub timepoint: i64,
    pub variant_id: String,
    pub adopter_id: String,
}

/// Inclusive interval of timepoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Self {
        TimeRange { start, end }
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.start..=self.end
    }

    fn check(&self) -> Result<(), CorpusError> {
        if self.is_empty() {
            Err(CorpusError::EmptyRange(self.start, self.end))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<AdoptionEvent>,
    pub timepoint_range: TimeRange,
}

impl EventLog {
    pub fn from_events(events: Vec<AdoptionEvent>) -> Result<Self, CorpusError> {
        let start = events.iter().map(|e| e.timepoint).min().ok_or(CorpusError::Empty)?;
        let end = events.iter().map(|e| e.timepoint).max().ok_or(CorpusError::Empty)?;
        Ok(EventLog {
            events,
            timepoint_range: TimeRange::new(start, end),
        })
    }

    /// Writes the log in the same format `parse_events` reads, header included.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["timepoint", "variant_id", "adopter_id"])?;
        for e in &self.events {
            w.write_record([e.timepoint.to_string().as_str(), &e.variant_id, &e.adopter_id])?;
        }
        w.flush().map_err(|e| CorpusError::Io(e.to_string()))
    }
}

/// Parameters of the simulated population, measured from the observed corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalParams {
    pub population_size: usize,
    pub innovation_rate: f64,
}

pub fn parse_events<R: Read>(input: R) -> Result<EventLog, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut events = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if i == 0 && rec.iter().eq(["timepoint", "variant_id", "adopter_id"]) {
            continue;
        }
        if rec.len() != 3 {
            return Err(CorpusError::Malformed {
                line,
                reason: format!("expected 3 fields, found {}", rec.len()),
            });
        }
        let timepoint = rec[0]
            .parse::<i64>()
            .map_err(|_| CorpusError::NonIntegerTimepoint { line })?;
        if rec[1].is_empty() || rec[2].is_empty() {
            return Err(CorpusError::Malformed {
                line,
                reason: "empty variant or adopter id".into(),
            });
        }
        events.push(AdoptionEvent {
            timepoint,
            variant_id: rec[1].to_string(),
            adopter_id: rec[2].to_string(),
        });
    }
    EventLog::from_events(events)
}

/// Tallies events inside `range` into a timepoint × variant table.
///
/// Every timepoint of the range gets a row, even if it saw no events; variant
/// columns are sorted by id and only variants used inside the range appear.
pub fn build_frequency_table(log: &EventLog, range: TimeRange) -> Result<FrequencyTable, CorpusError> {
    range.check()?;
    let mut tallies: BTreeMap<&str, BTreeMap<i64, u64>> = BTreeMap::new();
    let mut retained = 0usize;
    for e in log.events.iter().filter(|e| range.contains(e.timepoint)) {
        *tallies
            .entry(&e.variant_id)
            .or_default()
            .entry(e.timepoint)
            .or_default() += 1;
        retained += 1;
    }
    if retained == 0 {
        return Err(CorpusError::NoEventsRetained);
    }
    let timepoints: Vec<i64> = range.iter().collect();
    let variant_ids: Vec<String> = tallies.keys().map(|s| s.to_string()).collect();
    let mut counts = vec![vec![0u64; variant_ids.len()]; timepoints.len()];
    for (col, per_time) in tallies.values().enumerate() {
        for (&t, &c) in per_time {
            counts[(t - range.start) as usize][col] = c;
        }
    }
    FrequencyTable::new(timepoints, variant_ids, counts)
}

/// Mean number of distinct adopters per timepoint, rounded half-up.
pub fn estimate_population_size(log: &EventLog, range: TimeRange) -> Result<usize, CorpusError> {
    range.check()?;
    let mut adopters: BTreeMap<i64, HashSet<&str>> = BTreeMap::new();
    for e in log.events.iter().filter(|e| range.contains(e.timepoint)) {
        adopters.entry(e.timepoint).or_default().insert(&e.adopter_id);
    }
    let mut total = 0usize;
    for t in range.iter() {
        match adopters.get(&t) {
            Some(set) => total += set.len(),
            None => return Err(CorpusError::MissingTimepoint(t)),
        }
    }
    let n = (range.end - range.start + 1) as f64;
    let mean = total as f64 / n;
    Ok((mean + 0.5).floor().max(1.0) as usize)
}

/// Mean over every timepoint after the first of
/// (variants whose first nonzero count falls at t) / (tokens at t).
///
/// The first timepoint is left out: every variant in it is trivially new.
pub fn estimate_innovation_rate(table: &FrequencyTable) -> Result<f64, CorpusError> {
    let n_t = table.n_timepoints();
    if n_t < 2 {
        return Err(CorpusError::TooFewTimepoints(n_t));
    }
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut ratios = Vec::with_capacity(n_t - 1);
    for t in 0..n_t {
        let tokens = table.row_sum(t);
        if tokens == 0 {
            return Err(CorpusError::ZeroRowSum(table.timepoints[t]));
        }
        let mut new = 0usize;
        for (v, &c) in table.row(t).iter().enumerate() {
            if c > 0 && seen.insert(v) {
                new += 1;
            }
        }
        if t > 0 {
            ratios.push(new as f64 / tokens as f64);
        }
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Measures N and μ over `range`.
pub fn estimate_params(log: &EventLog, range: TimeRange) -> Result<EmpiricalParams, CorpusError> {
    let table = build_frequency_table(log, range)?;
    Ok(EmpiricalParams {
        population_size: estimate_population_size(log, range)?,
        innovation_rate: estimate_innovation_rate(&table)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: i64, v: &str, a: &str) -> AdoptionEvent {
        AdoptionEvent {
            timepoint: t,
            variant_id: v.into(),
            adopter_id: a.into(),
        }
    }

    #[test]
    fn single_row() {
        let log = parse_events("1987,amen,nwa\n".as_bytes()).unwrap();
        assert_eq!(log.events, vec![ev(1987, "amen", "nwa")]);
        assert_eq!(log.timepoint_range, TimeRange::new(1987, 1987));
    }

    #[test]
    fn header_and_range() {
        let text = "timepoint,variant_id,adopter_id\n1991,a,x\n1990,b,y\n1992,a,z\n";
        let log = parse_events(text.as_bytes()).unwrap();
        assert_eq!(log.events.len(), 3);
        assert_eq!(log.timepoint_range, TimeRange::new(1990, 1992));
        assert_eq!(log.events[0], ev(1991, "a", "x"));
    }

    #[test]
    fn non_integer_timepoint() {
        let err = parse_events("abc,amen,nwa\n".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "non-integer timepoint, line 1");
        let err = parse_events("timepoint,variant_id,adopter_id\n1,a,b\n19x9,a,b\n".as_bytes()).unwrap_err();
        assert_eq!(err, CorpusError::NonIntegerTimepoint { line: 3 });
    }

    #[test]
    fn malformed_and_empty() {
        assert_eq!(parse_events("".as_bytes()).unwrap_err(), CorpusError::Empty);
        assert_eq!(
            parse_events("timepoint,variant_id,adopter_id\n".as_bytes()).unwrap_err(),
            CorpusError::Empty
        );
        let err = parse_events("1990,a\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
        let err = parse_events("1990,a,\n".as_bytes()).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }));
    }

    #[test]
    fn hand_tally() {
        let log = EventLog::from_events(vec![ev(1990, "A", "x"), ev(1990, "A", "y"), ev(1991, "B", "x")]).unwrap();
        let table = build_frequency_table(&log, TimeRange::new(1990, 1991)).unwrap();
        assert_eq!(table.variant_ids, vec!["A", "B"]);
        assert_eq!(table.timepoints, vec![1990, 1991]);
        assert_eq!(table.counts, vec![vec![2, 0], vec![0, 1]]);
    }

    #[test]
    fn single_event_table() {
        let log = EventLog::from_events(vec![ev(2000, "A", "x")]).unwrap();
        let table = build_frequency_table(&log, TimeRange::new(2000, 2000)).unwrap();
        assert_eq!(table.counts, vec![vec![1]]);
    }

    #[test]
    fn clipping_drops_variants_outside() {
        let log = EventLog::from_events(vec![ev(1989, "Z", "x"), ev(1990, "A", "x")]).unwrap();
        let table = build_frequency_table(&log, TimeRange::new(1990, 1990)).unwrap();
        assert_eq!(table.variant_ids, vec!["A"]);
        assert_eq!(
            build_frequency_table(&log, TimeRange::new(2000, 2001)).unwrap_err(),
            CorpusError::NoEventsRetained
        );
        assert!(matches!(
            build_frequency_table(&log, TimeRange::new(2001, 2000)).unwrap_err(),
            CorpusError::EmptyRange(..)
        ));
    }

    #[test]
    fn population_size() {
        let log =
            EventLog::from_events(vec![ev(1, "a", "x"), ev(1, "a", "y"), ev(1, "b", "z"), ev(1, "b", "z")]).unwrap();
        assert_eq!(estimate_population_size(&log, TimeRange::new(1, 1)).unwrap(), 3);

        let log = EventLog::from_events(vec![
            ev(1, "a", "p"),
            ev(1, "a", "q"),
            ev(2, "a", "p"),
            ev(2, "a", "q"),
            ev(2, "a", "r"),
            ev(2, "a", "s"),
        ])
        .unwrap();
        assert_eq!(estimate_population_size(&log, TimeRange::new(1, 2)).unwrap(), 3);
        // 2.5 rounds up
        let log = EventLog::from_events(vec![
            ev(1, "a", "p"),
            ev(1, "a", "q"),
            ev(2, "a", "p"),
            ev(2, "a", "q"),
            ev(2, "a", "r"),
        ])
        .unwrap();
        assert_eq!(estimate_population_size(&log, TimeRange::new(1, 2)).unwrap(), 3);
        assert_eq!(
            estimate_population_size(&log, TimeRange::new(1, 3)).unwrap_err(),
            CorpusError::MissingTimepoint(3)
        );
    }

    #[test]
    fn innovation_rate_hand_ratio() {
        // year 2: 10 uses, one never-before-seen variant
        let table = FrequencyTable::new(
            vec![1, 2],
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![3, 2, 0], vec![5, 4, 1]],
        )
        .unwrap();
        assert!((estimate_innovation_rate(&table).unwrap() - 0.1).abs() < 1e-15);

        let table =
            FrequencyTable::new(vec![1, 2], vec!["a".into(), "b".into()], vec![vec![3, 2], vec![1, 1]]).unwrap();
        assert_eq!(estimate_innovation_rate(&table).unwrap(), 0.0);
    }

    #[test]
    fn innovation_rate_errors() {
        let one = FrequencyTable::new(vec![1], vec!["a".into()], vec![vec![1]]).unwrap();
        assert_eq!(
            estimate_innovation_rate(&one).unwrap_err(),
            CorpusError::TooFewTimepoints(1)
        );
        let gap = FrequencyTable::new(vec![1, 2], vec!["a".into()], vec![vec![1], vec![0]]).unwrap();
        assert_eq!(estimate_innovation_rate(&gap).unwrap_err(), CorpusError::ZeroRowSum(2));
    }

    fn arb_events() -> impl Strategy<Value = Vec<AdoptionEvent>> {
        prop::collection::vec((1990i64..1996, 0u8..6, 0u8..8), 1..60).prop_map(|v| {
            v.into_iter()
                .map(|(t, a, b)| ev(t, &format!("s{a}"), &format!("artist {b}")))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn serialize_parse_tally_roundtrip(events in arb_events(), lo in 1990i64..1996, len in 0i64..6) {
            let log = EventLog::from_events(events).unwrap();
            let mut buf = Vec::new();
            log.write_csv(&mut buf).unwrap();
            let parsed = parse_events(buf.as_slice()).unwrap();
            prop_assert_eq!(&parsed, &log);
            let range = TimeRange::new(lo, lo + len);
            let expected = log.events.iter().filter(|e| range.contains(e.timepoint)).count() as u64;
            match build_frequency_table(&parsed, range) {
                Ok(table) => {
                    prop_assert_eq!(table.total(), expected);
                    prop_assert!(table.column_sums().iter().all(|&c| c >= 1));
                }
                Err(e) => {
                    prop_assert_eq!(e, CorpusError::NoEventsRetained);
                    prop_assert_eq!(expected, 0);
                }
            }
        }

        #[test]
        fn innovation_rate_bounds(events in arb_events()) {
            let log = EventLog::from_events(events).unwrap();
            let table = build_frequency_table(&log, log.timepoint_range).unwrap();
            if let Ok(mu) = estimate_innovation_rate(&table) {
                prop_assert!((0.0..=1.0).contains(&mu));
                let first_nonzero: Vec<usize> = (0..table.n_variants())
                    .map(|v| (0..table.n_timepoints()).find(|&t| table.counts[t][v] > 0).unwrap())
                    .collect();
                let novelty_after_first = first_nonzero.iter().any(|&t| t > 0);
                prop_assert_eq!(mu == 0.0, !novelty_after_first);
            }
        }

        #[test]
        fn population_size_permutation_invariant(events in arb_events(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let log = EventLog::from_events(events.clone()).unwrap();
            let mut shuffled = events;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let log2 = EventLog::from_events(shuffled).unwrap();
            let r = log.timepoint_range;
            prop_assert_eq!(estimate_population_size(&log, r), estimate_population_size(&log2, r));
        }
    }
}
