//! Data curation: duplicates, outliers, localization, imputation, applied
//! in that order.

pub mod duplicates;
pub mod impute;
pub mod outliers;
pub mod timezone;

use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;

use crate::error::{Error, Result};
use crate::io::ParsedLoad;
use crate::series::LoadSeries;

pub use duplicates::{remove_duplicates, Deduplicated, RawRow};
pub use impute::{impute, ImputationParams, Imputed};
pub use outliers::{remove_outliers, OutlierReport};
pub use timezone::{convert_to_local, convert_to_local_with, Localized};

/// One line of the curation log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub timestamp: NaiveDateTime,
    pub original: Option<f64>,
    pub action: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Curated {
    /// Localized, gap-free series.
    pub series: LoadSeries,
    pub duplicates_dropped: usize,
    pub outliers: OutlierReport,
    pub fall_backs: usize,
    pub skipped_hours: usize,
    pub imputed: usize,
    pub log: Vec<LogEntry>,
}

/// Runs the four curation steps on a parsed file.
pub fn curate(parsed: &ParsedLoad, multiplier: f64, params: &ImputationParams) -> Result<Curated> {
    let series = &parsed.series;
    let dedup = remove_duplicates(&series.country_code, &series.timezone_id, &parsed.raw_rows);
    let mut log: Vec<LogEntry> = dedup
        .dropped
        .iter()
        .map(|r| LogEntry {
            timestamp: r.timestamp,
            original: r.value,
            action: "duplicate_dropped",
            detail: format!("row={}", r.row),
        })
        .collect();

    let (clean, outliers) = remove_outliers(&dedup.series, multiplier)?;
    log.extend(outliers.removed.iter().map(|o| LogEntry {
        timestamp: o.timestamp,
        original: Some(o.value),
        action: "outlier_removed",
        detail: format!("month_mean={};month_std={}", o.month_mean, o.month_std),
    }));

    let local = convert_to_local(&clean)?;
    log.extend(local.fall_backs.iter().map(|f| LogEntry {
        timestamp: f.local_time,
        original: None,
        action: "dst_averaged",
        detail: format!(
            "merged={}",
            f.merged.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("|")
        ),
    }));
    log.extend(local.skipped.iter().map(|&t| LogEntry {
        timestamp: t,
        original: None,
        action: "dst_skipped",
        detail: String::new(),
    }));

    let filled = impute(&local.series, params)?;
    log.extend(filled.points.iter().map(|p| LogEntry {
        timestamp: p.timestamp,
        original: None,
        action: "imputed",
        detail: format!(
            "value={};distance={};linear={};historical={};source={:?}",
            p.value,
            p.distance,
            p.linear.map(|l| l.to_string()).unwrap_or_default(),
            p.historical,
            p.history_source
        ),
    }));

    Ok(Curated {
        series: filled.series,
        duplicates_dropped: dedup.dropped.len(),
        outliers,
        fall_backs: local.fall_backs.len(),
        skipped_hours: local.skipped.len(),
        imputed: filled.points.len(),
        log,
    })
}

/// Writes a curation log as `timestamp,original,action,detail`.
pub fn write_log_csv(path: &Path, log: &[LogEntry]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "timestamp,original,action,detail").map_err(io)?;
    for e in log {
        writeln!(
            w,
            "{},{},{},{}",
            e.timestamp.format("%Y-%m-%dT%H:%M:%S"),
            e.original.map(|v| v.to_string()).unwrap_or_default(),
            e.action,
            e.detail
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_load_csv;
    use crate::series::{CountryMeta, TimeBase};

    #[test]
    fn curate_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let t0 = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let mut body = String::from("timestamp,load_mw\n");
        for h in (0..48).filter(|&h| h != 10) {
            let t = t0 + chrono::Duration::hours(h);
            body.push_str(&format!("{}Z,{}\n", t.format("%Y-%m-%dT%H:%M:%S"), 100 + h));
        }
        body.push_str("2020-01-01T00:00:00Z,5\n");
        std::fs::write(&p, body).unwrap();
        let meta = CountryMeta::new("XX", "X", "+01:00");
        let parsed = parse_load_csv(&p, &meta).unwrap();
        let c = curate(&parsed, 4.5, &ImputationParams::default()).unwrap();
        assert_eq!(c.duplicates_dropped, 1);
        assert_eq!(c.imputed, 1);
        assert!(c.series.is_complete());
        assert_eq!(c.series.timebase, TimeBase::Local);
        assert_eq!(c.series.values()[0], 100.0);
        let log = dir.path().join("log.csv");
        write_log_csv(&log, &c.log).unwrap();
        let text = std::fs::read_to_string(log).unwrap();
        assert!(text.starts_with("timestamp,original,action,detail\n"));
        assert!(text.contains("duplicate_dropped"));
        assert!(text.contains("imputed"));
    }
}
