use chrono::{Duration, NaiveDateTime};

use crate::series::{LoadSeries, TimeBase};

/// One data row as read from a load file, before any canonicalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    /// 1-based data row number (header excluded).
    pub row: usize,
    /// UTC instant.
    pub timestamp: NaiveDateTime,
    pub value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Deduplicated {
    pub series: LoadSeries,
    /// Rows discarded because an earlier row carried the same timestamp.
    pub dropped: Vec<RawRow>,
}

/// Collapses raw rows onto a dense hourly UTC index, keeping the first
/// occurrence of every timestamp. Hours with no row become missing.
pub fn remove_duplicates(country_code: &str, timezone_id: &str, rows: &[RawRow]) -> Deduplicated {
    if rows.is_empty() {
        return Deduplicated {
            series: LoadSeries::empty(country_code, timezone_id, TimeBase::Utc),
            dropped: Vec::new(),
        };
    }
    // stable sort keeps file order among equal timestamps
    let mut sorted: Vec<&RawRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.timestamp);

    let start = sorted[0].timestamp;
    let end = sorted[sorted.len() - 1].timestamp;
    let len = end.signed_duration_since(start).num_hours() as usize + 1;
    let mut readings: Vec<Option<f64>> = vec![None; len];
    let mut seen = vec![false; len];
    let mut dropped = Vec::new();
    for r in sorted {
        let i = r.timestamp.signed_duration_since(start).num_hours() as usize;
        if seen[i] {
            dropped.push(r.clone());
        } else {
            seen[i] = true;
            readings[i] = r.value;
        }
    }
    let series = LoadSeries::from_options(country_code, timezone_id, TimeBase::Utc, start, &readings)
        .expect("raw rows are validated at parse time");
    debug_assert_eq!(series.end(), end + Duration::hours(1));
    Deduplicated { series, dropped }
}
