//! Hourly load series and the dataset container.
//!
//! A [`LoadSeries`] always sits on a dense hourly index: hours without a
//! reading are kept as masked entries rather than dropped, so index
//! arithmetic (windowing, imputation distances, seasonal lags) never has to
//! consult timestamps.

use std::collections::BTreeMap;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the index of a series is labelled in UTC or in local wall-clock
/// time of the series' zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeBase {
    Utc,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryMeta {
    pub code: String,
    pub display_name: String,
    pub timezone_id: String,
    pub cluster_id: Option<u32>,
}

impl CountryMeta {
    pub fn new(code: &str, display_name: &str, timezone_id: &str) -> Self {
        CountryMeta {
            code: code.to_string(),
            display_name: display_name.to_string(),
            timezone_id: timezone_id.to_string(),
            cluster_id: None,
        }
    }
}

/// One country's hourly demand in MW.
#[derive(Debug, Clone)]
pub struct LoadSeries {
    pub country_code: String,
    pub timezone_id: String,
    pub timebase: TimeBase,
    start: NaiveDateTime,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl LoadSeries {
    /// Builds a series from optional readings; `None` marks a missing hour.
    pub fn from_options(
        country_code: &str,
        timezone_id: &str,
        timebase: TimeBase,
        start: NaiveDateTime,
        readings: &[Option<f64>],
    ) -> Result<Self> {
        check_hour_aligned(start)?;
        let mut values = Vec::with_capacity(readings.len());
        let mut missing = Vec::with_capacity(readings.len());
        for (i, r) in readings.iter().enumerate() {
            match *r {
                Some(v) => {
                    check_value(v, i)?;
                    values.push(v);
                    missing.push(false);
                }
                None => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Ok(LoadSeries {
            country_code: country_code.to_string(),
            timezone_id: timezone_id.to_string(),
            timebase,
            start,
            values,
            missing,
        })
    }

    /// Builds a fully observed series.
    pub fn from_values(
        country_code: &str,
        timezone_id: &str,
        timebase: TimeBase,
        start: NaiveDateTime,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_hour_aligned(start)?;
        for (i, &v) in values.iter().enumerate() {
            check_value(v, i)?;
        }
        let missing = vec![false; values.len()];
        Ok(LoadSeries {
            country_code: country_code.to_string(),
            timezone_id: timezone_id.to_string(),
            timebase,
            start,
            values,
            missing,
        })
    }

    pub fn empty(country_code: &str, timezone_id: &str, timebase: TimeBase) -> Self {
        LoadSeries {
            country_code: country_code.to_string(),
            timezone_id: timezone_id.to_string(),
            timebase,
            start: chrono::DateTime::UNIX_EPOCH.naive_utc(),
            values: Vec::new(),
            missing: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    /// Exclusive end of the index.
    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(self.values.len() as i64)
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::hours(i as i64)
    }

    /// Position of `t` on the index, if it lies inside the series.
    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        let offset = t.signed_duration_since(self.start);
        if offset.num_seconds() % 3600 != 0 {
            return None;
        }
        let h = offset.num_hours();
        (h >= 0 && (h as usize) < self.len()).then_some(h as usize)
    }

    /// Raw value storage; missing entries hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        (!self.missing[i]).then(|| self.values[i])
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.missing.iter().any(|&m| m)
    }

    pub fn readings(&self) -> Vec<Option<f64>> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Mean of the observed values, `None` when nothing is observed.
    pub fn observed_mean(&self) -> Option<f64> {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.missing)
            .filter(|(_, &m)| !m)
            .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Sub-series covering index positions `from..to`.
    pub fn slice(&self, from: usize, to: usize) -> LoadSeries {
        LoadSeries {
            country_code: self.country_code.clone(),
            timezone_id: self.timezone_id.clone(),
            timebase: self.timebase,
            start: self.timestamp(from),
            values: self.values[from..to].to_vec(),
            missing: self.missing[from..to].to_vec(),
        }
    }

    /// Same metadata, new contents. Used by the curation steps.
    pub(crate) fn rebuild(
        &self,
        timebase: TimeBase,
        start: NaiveDateTime,
        readings: &[Option<f64>],
    ) -> Result<LoadSeries> {
        LoadSeries::from_options(
            &self.country_code,
            &self.timezone_id,
            timebase,
            start,
            readings,
        )
    }

    /// Multiplies every observed value by `c`.
    pub fn scaled(&self, c: f64) -> Result<LoadSeries> {
        let readings: Vec<_> = self.readings().iter().map(|r| r.map(|v| v * c)).collect();
        self.rebuild(self.timebase, self.start, &readings)
    }

    /// Local hour of day for position `i` (meaningful once localized).
    pub fn hour_of_day(&self, i: usize) -> u32 {
        self.timestamp(i).hour()
    }

    /// Weekday index, Monday = 0.
    pub fn weekday(&self, i: usize) -> u32 {
        self.timestamp(i).weekday().num_days_from_monday()
    }

    /// Month index, January = 0.
    pub fn month0(&self, i: usize) -> u32 {
        self.timestamp(i).month0()
    }
}

impl PartialEq for LoadSeries {
    /// Equal metadata, index and readings; placeholder values under the
    /// missing mask are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.country_code == other.country_code
            && self.timezone_id == other.timezone_id
            && self.timebase == other.timebase
            && self.start == other.start
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), &m)| m || a == b)
    }
}

fn check_hour_aligned(t: NaiveDateTime) -> Result<()> {
    if t.minute() != 0 || t.second() != 0 || t.nanosecond() != 0 {
        return Err(Error::InvalidInput(format!(
            "timestamp {t} is not aligned to the hour"
        )));
    }
    Ok(())
}

fn check_value(v: f64, i: usize) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidInput(format!(
            "load at position {i} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

/// Train/validation/test boundaries, shared by every country of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDateTime,
    pub val_end: NaiveDateTime,
    pub test_end: NaiveDateTime,
}

impl SplitSpec {
    pub fn new(
        train_end: NaiveDateTime,
        val_end: NaiveDateTime,
        test_end: NaiveDateTime,
    ) -> Result<Self> {
        if !(train_end < val_end && val_end < test_end) {
            return Err(Error::Split(format!(
                "boundaries must be increasing: {train_end} / {val_end} / {test_end}"
            )));
        }
        Ok(SplitSpec {
            train_end,
            val_end,
            test_end,
        })
    }

    /// Boundaries at 1 January of the three given years.
    pub fn from_years(train_end: i32, val_end: i32, test_end: i32) -> Result<Self> {
        SplitSpec::new(
            year_start(train_end)?,
            year_start(val_end)?,
            year_start(test_end)?,
        )
    }
}

pub fn year_start(year: i32) -> Result<NaiveDateTime> {
    NaiveDate::from_ymd_opt(year, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| Error::InvalidInput(format!("year {year} out of range")))
}

/// The three partitions of one series.
#[derive(Debug, Clone)]
pub struct SplitSeries {
    pub train: LoadSeries,
    pub val: LoadSeries,
    pub test: LoadSeries,
}

/// Cuts a series at the split boundaries.
///
/// The train part runs from the series start (which may be later than the
/// dataset's nominal start) up to `train_end`.
pub fn split_series(series: &LoadSeries, splits: &SplitSpec) -> Result<SplitSeries> {
    let start = series.start();
    let end = series.end();
    if splits.train_end <= start {
        return Err(Error::Split(format!(
            "{}: series starts at {start}, train partition before {} would be empty",
            series.country_code, splits.train_end
        )));
    }
    if splits.test_end > end {
        return Err(Error::Split(format!(
            "{}: test boundary {} lies beyond the series end {end}",
            series.country_code, splits.test_end
        )));
    }
    let pos = |t: NaiveDateTime| t.signed_duration_since(start).num_hours() as usize;
    let (a, b, c) = (
        pos(splits.train_end),
        pos(splits.val_end),
        pos(splits.test_end),
    );
    Ok(SplitSeries {
        train: series.slice(0, a),
        val: series.slice(a, b),
        test: series.slice(b, c),
    })
}

/// A set of country series sharing one split specification.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub countries: BTreeMap<String, CountryMeta>,
    pub series: BTreeMap<String, LoadSeries>,
    pub splits: SplitSpec,
}

impl Dataset {
    pub fn new(
        metas: Vec<CountryMeta>,
        series: Vec<LoadSeries>,
        splits: SplitSpec,
    ) -> Result<Self> {
        let mut countries = BTreeMap::new();
        for m in metas {
            let code = m.code.clone();
            if countries.insert(code.clone(), m).is_some() {
                return Err(Error::InvalidInput(format!("duplicate country code {code}")));
            }
        }
        let mut map = BTreeMap::new();
        for s in series {
            if !countries.contains_key(&s.country_code) {
                return Err(Error::InvalidInput(format!(
                    "series for unknown country {}",
                    s.country_code
                )));
            }
            map.insert(s.country_code.clone(), s);
        }
        Ok(Dataset {
            countries,
            series: map,
            splits,
        })
    }

    pub fn codes(&self) -> Vec<String> {
        self.series.keys().cloned().collect()
    }

    pub fn get(&self, code: &str) -> Result<&LoadSeries> {
        self.series
            .get(code)
            .ok_or_else(|| Error::InvalidInput(format!("country {code} not in dataset")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_opt(h, 0, 0)
            .unwrap()
    }

    fn yearly_series(from_year: i32, to_year: i32) -> LoadSeries {
        let start = year_start(from_year).unwrap();
        let hours = year_start(to_year)
            .unwrap()
            .signed_duration_since(start)
            .num_hours() as usize;
        LoadSeries::from_values("XX", "UTC", TimeBase::Utc, start, vec![1.0; hours]).unwrap()
    }

    fn years(s: &LoadSeries) -> f64 {
        s.len() as f64 / (24.0 * 365.0)
    }

    #[test]
    fn split_seven_years_five_one_one() {
        let s = yearly_series(2015, 2022);
        let splits = SplitSpec::from_years(2020, 2021, 2022).unwrap();
        let parts = split_series(&s, &splits).unwrap();
        assert_eq!(parts.train.start(), t(2015, 1, 1, 0));
        assert_eq!(parts.val.start(), t(2020, 1, 1, 0));
        assert_eq!(parts.test.start(), t(2021, 1, 1, 0));
        assert_eq!(years(&parts.train).round(), 5.0);
        assert_eq!(parts.val.len(), 366 * 24);
        assert_eq!(parts.test.len(), 365 * 24);
        assert_eq!(parts.train.len() + parts.val.len() + parts.test.len(), s.len());
    }

    #[test]
    fn late_onset_shortens_train() {
        let s = yearly_series(2017, 2022);
        let splits = SplitSpec::from_years(2020, 2021, 2022).unwrap();
        let parts = split_series(&s, &splits).unwrap();
        assert_eq!(years(&parts.train).round(), 3.0);
        assert_eq!(parts.train.start(), t(2017, 1, 1, 0));
    }

    #[test]
    fn split_outside_range_is_error() {
        let s = yearly_series(2015, 2020);
        assert!(split_series(&s, &SplitSpec::from_years(2020, 2021, 2022).unwrap()).is_err());
        let late = yearly_series(2021, 2022);
        assert!(split_series(&late, &SplitSpec::from_years(2020, 2021, 2022).unwrap()).is_err());
    }

    #[test]
    fn split_spec_must_increase() {
        assert!(SplitSpec::from_years(2020, 2020, 2021).is_err());
    }

    #[test]
    fn rejects_negative_and_unaligned() {
        assert!(LoadSeries::from_values("XX", "UTC", TimeBase::Utc, t(2020, 1, 1, 0), vec![-1.0]).is_err());
        let unaligned = t(2020, 1, 1, 0) + Duration::minutes(30);
        assert!(LoadSeries::from_values("XX", "UTC", TimeBase::Utc, unaligned, vec![1.0]).is_err());
    }

    #[test]
    fn index_lookup() {
        let s = LoadSeries::from_values("XX", "UTC", TimeBase::Utc, t(2020, 1, 1, 0), vec![1.0; 48]).unwrap();
        assert_eq!(s.index_of(t(2020, 1, 2, 5)), Some(29));
        assert_eq!(s.index_of(t(2020, 1, 3, 0)), None);
        assert_eq!(s.index_of(t(2019, 12, 31, 23)), None);
    }

    #[test]
    fn duplicate_country_rejected() {
        let metas = vec![CountryMeta::new("AA", "A", "UTC"), CountryMeta::new("AA", "B", "UTC")];
        let splits = SplitSpec::from_years(2020, 2021, 2022).unwrap();
        assert!(Dataset::new(metas, vec![], splits).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn split_partitions_cover_range(offset_days in 0usize..700, extra in 0usize..400) {
            let start = year_start(2019).unwrap() + Duration::days(offset_days as i64);
            let test_end = year_start(2022).unwrap();
            let hours = test_end.signed_duration_since(start).num_hours() as usize + extra;
            let s = LoadSeries::from_values("XX", "UTC", TimeBase::Utc, start, (0..hours).map(|i| i as f64).collect()).unwrap();
            let splits = SplitSpec::new(year_start(2021).unwrap(), year_start(2021).unwrap() + Duration::days(180), test_end).unwrap();
            let parts = split_series(&s, &splits).unwrap();
            let in_range = test_end.signed_duration_since(start).num_hours() as usize;
            prop_assert_eq!(parts.train.len() + parts.val.len() + parts.test.len(), in_range);
            // contiguous and ordered: values are the index itself
            let joined: Vec<f64> = parts.train.values().iter().chain(parts.val.values()).chain(parts.test.values()).copied().collect();
            prop_assert!(joined.iter().enumerate().all(|(i, &v)| v == i as f64));
        }
    }
}
