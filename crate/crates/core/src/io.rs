//! Load files and the dataset manifest.
//!
//! Input files carry a `timestamp,load_mw` header with ISO-8601 timestamps
//! that include an explicit UTC offset. Curated (localized) series are
//! written with a `local_time,load_mw` header and naive wall-clock
//! timestamps. An empty value field marks a missing hour in both.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::series::{CountryMeta, LoadSeries, TimeBase};
use crate::wrangle::duplicates::{remove_duplicates, RawRow};

pub const UTC_HEADER: [&str; 2] = ["timestamp", "load_mw"];
pub const LOCAL_HEADER: [&str; 2] = ["local_time", "load_mw"];
const LOCAL_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Result of reading one country's load file.
#[derive(Debug, Clone)]
pub struct ParsedLoad {
    /// Canonical dense UTC series; duplicated timestamps resolved keep-first.
    pub series: LoadSeries,
    /// Every data row in file order.
    pub raw_rows: Vec<RawRow>,
    /// All rows whose timestamp occurs more than once, in file order.
    pub duplicate_rows: Vec<RawRow>,
}

fn parse_offset_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%:z",
        "%Y-%m-%d %H:%M:%S%:z",
        "%Y-%m-%dT%H:%M%:z",
        "%Y-%m-%d %H:%M%:z",
    ];
    FORMATS
        .iter()
        .find_map(|f| DateTime::parse_from_str(s, f).ok())
        .map(|t| t.naive_utc())
}

fn parse_value(field: &str) -> std::result::Result<Option<f64>, String> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field
        .parse()
        .map_err(|_| format!("unparseable load value `{field}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("load value `{field}` must be finite and non-negative"));
    }
    Ok(Some(v))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: [&str; 2]) -> Result<()> {
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        message: e.to_string(),
    })?;
    if header.len() != 2 || header.get(0) != Some(expected[0]) || header.get(1) != Some(expected[1]) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            message: format!("expected header `{},{}`", expected[0], expected[1]),
        });
    }
    Ok(())
}

/// Reads an hourly load file into a canonical UTC series.
pub fn parse_load_csv(path: &Path, meta: &CountryMeta) -> Result<ParsedLoad> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, UTC_HEADER)?;
    let perr = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| perr(row, e.to_string()))?;
        if rec.len() != 2 {
            return Err(perr(row, format!("expected 2 fields, found {}", rec.len())));
        }
        let ts = parse_offset_timestamp(&rec[0])
            .ok_or_else(|| perr(row, format!("unparseable timestamp `{}`", &rec[0])))?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(perr(row, format!("timestamp `{}` is not on the hour", &rec[0])));
        }
        let value = parse_value(&rec[1]).map_err(|m| perr(row, m))?;
        rows.push(RawRow {
            row,
            timestamp: ts,
            value,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    let dedup = remove_duplicates(&meta.code, &meta.timezone_id, &rows);
    let mut counts = std::collections::HashMap::new();
    for r in &rows {
        *counts.entry(r.timestamp).or_insert(0usize) += 1;
    }
    let duplicate_rows = rows
        .iter()
        .filter(|r| counts[&r.timestamp] > 1)
        .cloned()
        .collect();
    Ok(ParsedLoad {
        series: dedup.series,
        raw_rows: rows,
        duplicate_rows,
    })
}

fn format_value(v: Option<f64>) -> String {
    // `{}` on f64 prints the shortest representation that parses back exactly
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes a series in the format matching its time base.
pub fn write_series_csv(path: &Path, series: &LoadSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match series.timebase {
        TimeBase::Utc => writeln!(w, "{}", UTC_HEADER.join(",")).map_err(io)?,
        TimeBase::Local => writeln!(w, "{}", LOCAL_HEADER.join(",")).map_err(io)?,
    }
    for i in 0..series.len() {
        let t = series.timestamp(i);
        let stamp = match series.timebase {
            TimeBase::Utc => format!("{}+00:00", t.format(LOCAL_FORMAT)),
            TimeBase::Local => t.format(LOCAL_FORMAT).to_string(),
        };
        writeln!(w, "{stamp},{}", format_value(series.get(i))).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a curated series written by [`write_series_csv`] with a local
/// time base. The index must already be dense.
pub fn read_local_csv(path: &Path, meta: &CountryMeta) -> Result<LoadSeries> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, LOCAL_HEADER)?;
    let perr = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut start = None;
    let mut readings = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| perr(row, e.to_string()))?;
        if rec.len() != 2 {
            return Err(perr(row, format!("expected 2 fields, found {}", rec.len())));
        }
        let t = NaiveDateTime::parse_from_str(&rec[0], LOCAL_FORMAT)
            .map_err(|_| perr(row, format!("unparseable timestamp `{}`", &rec[0])))?;
        let s = *start.get_or_insert(t);
        if t.signed_duration_since(s).num_hours() != k as i64 {
            return Err(perr(row, "index is not dense and hourly".to_string()));
        }
        readings.push(parse_value(&rec[1]).map_err(|m| perr(row, m))?);
    }
    let start = start.ok_or_else(|| Error::EmptyFile(path.to_path_buf()))?;
    LoadSeries::from_options(&meta.code, &meta.timezone_id, TimeBase::Local, start, &readings)
}

/// One manifest entry: `code,display_name,timezone_id,csv_path`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub meta: CountryMeta,
    pub csv_path: PathBuf,
}

/// Reads a dataset manifest. Relative CSV paths resolve against the
/// manifest's directory. Lines starting with `#` are ignored, as is a
/// leading header line starting with `code,`.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out: Vec<ManifestEntry> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (k == 0 && line.starts_with("code,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: k + 1,
                message: "expected `code,display_name,timezone_id,csv_path`".into(),
            });
        }
        if out.iter().any(|e| e.meta.code == fields[0]) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: k + 1,
                message: format!("duplicate country code {}", fields[0]),
            });
        }
        let csv = PathBuf::from(fields[3]);
        out.push(ManifestEntry {
            meta: CountryMeta::new(fields[0], fields[1], fields[2]),
            csv_path: if csv.is_absolute() { csv } else { base.join(csv) },
        });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::from("code,display_name,timezone_id,csv_path\n");
    for e in entries {
        text.push_str(&format!(
            "{},{},{},{}\n",
            e.meta.code,
            e.meta.display_name,
            e.meta.timezone_id,
            e.csv_path.display()
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
