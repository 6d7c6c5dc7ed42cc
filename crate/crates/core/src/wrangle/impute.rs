//! Hybrid gap filling: a blend of linear interpolation and a seasonal
//! historical estimate, weighted by distance to the nearest observation.

use chrono::NaiveDateTime;

use crate::error::{Error, Result};
use crate::series::LoadSeries;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ImputationParams {
    /// Decay rate of the interpolation weight per sample of distance.
    pub a: f64,
    pub history_weeks: usize,
}

impl Default for ImputationParams {
    fn default() -> Self {
        ImputationParams {
            a: 0.3,
            history_weeks: 4,
        }
    }
}

impl ImputationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::InvalidInput(format!("decay a must be > 0, got {}", self.a)));
        }
        if self.history_weeks == 0 {
            return Err(Error::InvalidInput("history_weeks must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weight of the interpolation estimate at distance `d`.
pub fn blend_weight(a: f64, d: f64) -> f64 {
    (-a * d).exp()
}

/// `w·L + (1 − w)·H` with `w = exp(−a·d)`.
pub fn blend(a: f64, d: f64, linear: f64, historical: f64) -> f64 {
    let w = blend_weight(a, d);
    w * linear + (1.0 - w) * historical
}

/// Which estimate supplied `H` for an imputed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistorySource {
    SameWeekHour,
    SameHourLastWeek,
    SeriesMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedPoint {
    pub timestamp: NaiveDateTime,
    pub value: f64,
    pub distance: usize,
    /// `None` at leading/trailing gaps, which use the historical estimate alone.
    pub linear: Option<f64>,
    pub historical: f64,
    pub history_source: HistorySource,
}

#[derive(Debug, Clone)]
pub struct Imputed {
    pub series: LoadSeries,
    pub points: Vec<ImputedPoint>,
}

impl Imputed {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

fn mean_of(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = vals.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Historical estimate for position `i` from observed values only.
fn historical(series: &LoadSeries, i: usize, weeks: usize, fallback: f64) -> (f64, HistorySource) {
    let lagged = |step: usize, count: usize| {
        mean_of((1..=count).filter_map(|k| {
            let lag = step * k;
            (lag <= i).then(|| series.get(i - lag)).flatten()
        }))
    };
    if let Some(h) = lagged(168, weeks) {
        return (h, HistorySource::SameWeekHour);
    }
    if let Some(h) = lagged(24, 7) {
        return (h, HistorySource::SameHourLastWeek);
    }
    (fallback, HistorySource::SeriesMean)
}

/// Fills every missing sample. Observed samples are never altered.
pub fn impute(series: &LoadSeries, params: &ImputationParams) -> Result<Imputed> {
    params.validate()?;
    let series_mean = series.observed_mean().ok_or_else(|| {
        Error::InvalidInput(format!("{}: series is entirely missing", series.country_code))
    })?;
    let n = series.len();

    // nearest observed index at or before / at or after each position
    let mut prev = vec![None; n];
    let mut last = None;
    for i in 0..n {
        if !series.is_missing(i) {
            last = Some(i);
        }
        prev[i] = last;
    }
    let mut next = vec![None; n];
    last = None;
    for i in (0..n).rev() {
        if !series.is_missing(i) {
            last = Some(i);
        }
        next[i] = last;
    }

    let mut readings = series.readings();
    let mut points = Vec::new();
    for i in 0..n {
        if !series.is_missing(i) {
            continue;
        }
        let (h, source) = historical(series, i, params.history_weeks, series_mean);
        let (value, distance, linear) = match (prev[i], next[i]) {
            (Some(p), Some(q)) => {
                let (vp, vq) = (series.values()[p], series.values()[q]);
                let l = vp + (vq - vp) * (i - p) as f64 / (q - p) as f64;
                let d = (i - p).min(q - i);
                (blend(params.a, d as f64, l, h), d, Some(l))
            }
            (Some(p), None) => (h, i - p, None),
            (None, Some(q)) => (h, q - i, None),
            (None, None) => unreachable!("series has an observed value"),
        };
        readings[i] = Some(value);
        points.push(ImputedPoint {
            timestamp: series.timestamp(i),
            value,
            distance,
            linear,
            historical: h,
            history_source: source,
        });
    }
    Ok(Imputed {
        series: series.rebuild(series.timebase, series.start(), &readings)?,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimeBase;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2020, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    #[test]
    fn single_gap_blend_value() {
        // four prior weeks at the same hour all read 90 → H = 90
        let mut r: Vec<Option<f64>> = vec![Some(90.0); 4 * 168 + 2];
        let i = 4 * 168;
        r[i - 1] = Some(100.0);
        r[i] = None;
        r[i + 1] = Some(120.0);
        let s = LoadSeries::from_options("XX", "UTC", TimeBase::Local, t0(), &r).unwrap();
        let out = impute(&s, &ImputationParams::default()).unwrap();
        assert_eq!(out.count(), 1);
        let p = &out.points[0];
        assert_eq!(p.distance, 1);
        assert_eq!(p.linear, Some(110.0));
        assert_eq!(p.historical, 90.0);
        assert_eq!(p.history_source, HistorySource::SameWeekHour);
        let w = (-0.3f64).exp();
        assert!((w - 0.740818).abs() < 1e-6);
        let oracle = w * 110.0 + (1.0 - w) * 90.0;
        assert!((p.value - oracle).abs() < 1e-12);
        assert!((p.value - 104.816).abs() < 1e-3);
    }

    #[test]
    fn nothing_missing_is_identity() {
        let s = LoadSeries::from_values("XX", "UTC", TimeBase::Local, t0(), vec![1.0, 2.0, 3.0]).unwrap();
        let out = impute(&s, &ImputationParams::default()).unwrap();
        assert_eq!(out.count(), 0);
        assert_eq!(out.series, s);
    }

    #[test]
    fn long_gap_tends_to_history() {
        let w = blend_weight(0.3, 16.0);
        assert!(w < 0.01);
        assert!(((-4.8f64).exp() - 0.0082).abs() < 1e-4);
        let (l, h) = (500.0, 300.0);
        let r = blend(0.3, 16.0, l, h);
        assert!((r - h).abs() <= 0.01 * (l - h).abs());
    }

    #[test]
    fn edge_gaps_use_history_only() {
        let r = vec![None, None, Some(10.0), Some(20.0), None];
        let s = LoadSeries::from_options("XX", "UTC", TimeBase::Local, t0(), &r).unwrap();
        let out = impute(&s, &ImputationParams::default()).unwrap();
        assert_eq!(out.count(), 3);
        for p in &out.points {
            assert!(p.linear.is_none());
            assert_eq!(p.history_source, HistorySource::SeriesMean);
            assert_eq!(p.value, 15.0);
        }
    }

    #[test]
    fn falls_back_to_last_week_hours() {
        // only three days of history: same-weekday lags are absent
        let mut r: Vec<Option<f64>> = (0..72).map(|k| Some((k / 24) as f64 * 10.0 + 50.0)).collect();
        r.extend([Some(0.0), None, Some(0.0)]);
        let s = LoadSeries::from_options("XX", "UTC", TimeBase::Local, t0(), &r).unwrap();
        let out = impute(&s, &ImputationParams::default()).unwrap();
        let p = &out.points[0];
        assert_eq!(p.history_source, HistorySource::SameHourLastWeek);
        // hour 1 on days 0,1,2 → 50, 60, 70
        assert_eq!(p.historical, 60.0);
    }

    #[test]
    fn all_missing_is_error() {
        let s = LoadSeries::from_options("XX", "UTC", TimeBase::Local, t0(), &[None, None]).unwrap();
        assert!(impute(&s, &ImputationParams::default()).is_err());
        let bad = ImputationParams { a: 0.0, history_weeks: 4 };
        let ok = LoadSeries::from_values("XX", "UTC", TimeBase::Local, t0(), vec![1.0]).unwrap();
        assert!(impute(&ok, &bad).is_err());
    }

    proptest! {
        #[test]
        fn output_complete_and_observed_untouched(r in proptest::collection::vec(proptest::option::weighted(0.7, 1.0f64..1000.0), 1..600)) {
            prop_assume!(r.iter().any(Option::is_some));
            let s = LoadSeries::from_options("XX", "UTC", TimeBase::Local, t0(), &r).unwrap();
            let out = impute(&s, &ImputationParams::default()).unwrap();
            prop_assert!(out.series.is_complete());
            prop_assert_eq!(out.count(), s.missing_count());
            for (i, v) in r.iter().enumerate() {
                if let Some(v) = v { prop_assert_eq!(out.series.values()[i], *v); }
            }
        }

        #[test]
        fn blend_moves_monotonically_toward_history(l in -1e3f64..1e3, h in -1e3f64..1e3, d in 1usize..60) {
            let a = 0.3;
            let r0 = blend(a, d as f64, l, h);
            let r1 = blend(a, (d + 1) as f64, l, h);
            prop_assert!((r1 - h).abs() <= (r0 - h).abs() + 1e-12);
            prop_assert!(blend_weight(a, (d + 1) as f64) < blend_weight(a, d as f64));
        }
    }
}
