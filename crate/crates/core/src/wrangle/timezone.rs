use std::str::FromStr;

use chrono::{Duration, FixedOffset, NaiveDateTime, Offset, TimeZone};
use chrono_tz::Tz;

use crate::error::{Error, Result};
use crate::series::{LoadSeries, TimeBase};

/// Anything that can report the UTC offset in force at a UTC instant.
pub trait ZoneRule {
    fn offset_seconds(&self, utc: NaiveDateTime) -> i32;
}

impl ZoneRule for Tz {
    fn offset_seconds(&self, utc: NaiveDateTime) -> i32 {
        self.offset_from_utc_datetime(&utc).fix().local_minus_utc()
    }
}

impl ZoneRule for FixedOffset {
    fn offset_seconds(&self, _utc: NaiveDateTime) -> i32 {
        self.local_minus_utc()
    }
}

impl<F: Fn(NaiveDateTime) -> i32> ZoneRule for F {
    fn offset_seconds(&self, utc: NaiveDateTime) -> i32 {
        self(utc)
    }
}

/// Resolves an IANA zone name or a fixed `±HH:MM` offset.
pub fn resolve_zone(id: &str) -> Result<Box<dyn ZoneRule + Send + Sync>> {
    if let Ok(tz) = Tz::from_str(id) {
        return Ok(Box::new(tz));
    }
    if let Ok(off) = FixedOffset::from_str(id) {
        return Ok(Box::new(off));
    }
    Err(Error::UnknownTimezone(id.to_string()))
}

/// A local hour that received more than one UTC hour (clocks falling back).
#[derive(Debug, Clone, PartialEq)]
pub struct FallBack {
    pub local_time: NaiveDateTime,
    pub merged: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Localized {
    pub series: LoadSeries,
    pub fall_backs: Vec<FallBack>,
    /// Local hours that no UTC hour maps to (clocks springing forward).
    pub skipped: Vec<NaiveDateTime>,
}

impl Localized {
    /// Load removed by averaging the merged fall-back hours.
    pub fn energy_lost(&self) -> f64 {
        self.fall_backs
            .iter()
            .map(|f| {
                let s: f64 = f.merged.iter().sum();
                s - s / f.merged.len() as f64
            })
            .sum()
    }
}

/// Relabels a UTC series in the wall-clock time of its `timezone_id`.
pub fn convert_to_local(series: &LoadSeries) -> Result<Localized> {
    let zone = resolve_zone(&series.timezone_id)?;
    convert_to_local_with(series, zone.as_ref())
}

/// Relabels a UTC series with an explicit zone rule.
///
/// Two UTC hours landing on one local hour are averaged; a local hour that
/// nothing lands on is left missing. The output index stays dense.
pub fn convert_to_local_with(series: &LoadSeries, zone: &dyn ZoneRule) -> Result<Localized> {
    if series.timebase != TimeBase::Utc {
        return Err(Error::InvalidInput(format!(
            "{}: series is already localized",
            series.country_code
        )));
    }
    if series.is_empty() {
        let mut s = series.clone();
        s.timebase = TimeBase::Local;
        return Ok(Localized {
            series: s,
            fall_backs: Vec::new(),
            skipped: Vec::new(),
        });
    }

    let mut local = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let utc = series.timestamp(i);
        let off = zone.offset_seconds(utc);
        if off % 3600 != 0 {
            return Err(Error::InvalidInput(format!(
                "{}: zone offset {off}s at {utc} is not a whole number of hours",
                series.country_code
            )));
        }
        local.push(utc + Duration::seconds(off as i64));
    }
    let start = local.iter().copied().min().expect("non-empty");
    let end = local.iter().copied().max().expect("non-empty");
    let len = end.signed_duration_since(start).num_hours() as usize + 1;

    let mut contributions: Vec<Vec<f64>> = vec![Vec::new(); len];
    let mut hit = vec![false; len];
    for (i, t) in local.iter().enumerate() {
        let k = t.signed_duration_since(start).num_hours() as usize;
        hit[k] = true;
        if let Some(v) = series.get(i) {
            contributions[k].push(v);
        }
    }

    let mut readings = Vec::with_capacity(len);
    let mut fall_backs = Vec::new();
    let mut skipped = Vec::new();
    for (k, vals) in contributions.into_iter().enumerate() {
        let t = start + Duration::hours(k as i64);
        if !hit[k] {
            skipped.push(t);
        }
        if vals.is_empty() {
            readings.push(None);
        } else {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if vals.len() > 1 {
                fall_backs.push(FallBack {
                    local_time: t,
                    merged: vals,
                });
            }
            readings.push(Some(mean));
        }
    }
    Ok(Localized {
        series: series.rebuild(TimeBase::Local, start, &readings)?,
        fall_backs,
        skipped,
    })
}
