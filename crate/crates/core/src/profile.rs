//! Average load profiles and the normalized profile vectors used for
//! clustering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::LoadSeries;

pub const DAILY_LEN: usize = 24;
pub const WEEKLY_LEN: usize = 7;
pub const YEARLY_LEN: usize = 12;
pub const VECTOR_LEN: usize = DAILY_LEN + WEEKLY_LEN + YEARLY_LEN;

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Mean load by local hour, weekday (Monday first) and month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfiles {
    pub daily: Vec<f64>,
    pub weekly: Vec<f64>,
    pub yearly: Vec<f64>,
}

fn bucket_means(sums: &[f64], counts: &[usize], what: &str, label: impl Fn(usize) -> String) -> Result<Vec<f64>> {
    sums.iter()
        .zip(counts)
        .enumerate()
        .map(|(k, (&s, &n))| {
            if n == 0 {
                Err(Error::EmptyBucket(format!("{what} {}", label(k))))
            } else {
                Ok(s / n as f64)
            }
        })
        .collect()
}

fn profile_by(series: &LoadSeries, buckets: usize, key: impl Fn(usize) -> usize) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; buckets];
    let mut counts = vec![0usize; buckets];
    for i in 0..series.len() {
        if let Some(v) = series.get(i) {
            let k = key(i);
            sums[k] += v;
            counts[k] += 1;
        }
    }
    (sums, counts)
}

/// Mean load per local hour of day.
pub fn daily_profile(series: &LoadSeries) -> Result<Vec<f64>> {
    let (s, n) = profile_by(series, DAILY_LEN, |i| series.hour_of_day(i) as usize);
    bucket_means(&s, &n, "hour", |k| k.to_string())
}

/// Mean load per weekday, Monday first.
pub fn weekly_profile(series: &LoadSeries) -> Result<Vec<f64>> {
    let (s, n) = profile_by(series, WEEKLY_LEN, |i| series.weekday(i) as usize);
    bucket_means(&s, &n, "weekday", |k| WEEKDAYS[k].to_string())
}

/// Mean load per calendar month.
pub fn yearly_profile(series: &LoadSeries) -> Result<Vec<f64>> {
    let (s, n) = profile_by(series, YEARLY_LEN, |i| series.month0(i) as usize);
    bucket_means(&s, &n, "month", |k| (k + 1).to_string())
}

/// Profiles over the observed samples of a localized series.
pub fn compute_profiles(series: &LoadSeries) -> Result<LoadProfiles> {
    Ok(LoadProfiles {
        daily: daily_profile(series)?,
        weekly: weekly_profile(series)?,
        yearly: yearly_profile(series)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileVector {
    pub country_code: String,
    pub components: Vec<f64>,
}

/// Min-max normalization to [0, 1]; a constant input maps to all 0.5.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        values.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.5; values.len()]
    }
}

/// Concatenates the normalized daily, weekly and yearly profiles.
pub fn build_profile_vector(country_code: &str, profiles: &LoadProfiles) -> ProfileVector {
    let mut components = min_max(&profiles.daily);
    components.extend(min_max(&profiles.weekly));
    components.extend(min_max(&profiles.yearly));
    ProfileVector {
        country_code: country_code.to_string(),
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimeBase;
    use chrono::{NaiveDate, NaiveDateTime};

    fn monday() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
    }

    fn local(values: Vec<f64>) -> LoadSeries {
        LoadSeries::from_values("XX", "UTC", TimeBase::Local, monday(), values).unwrap()
    }

    #[test]
    fn constant_series_profiles() {
        let p = compute_profiles(&local(vec![100.0; 365 * 24])).unwrap();
        assert!(p.daily.iter().chain(&p.weekly).chain(&p.yearly).all(|&v| v == 100.0));
        assert_eq!(p.daily.len() + p.weekly.len() + p.yearly.len(), VECTOR_LEN);
    }

    #[test]
    fn hour_index_series() {
        let p = compute_profiles(&local((0..365 * 24).map(|i| (i % 24) as f64).collect())).unwrap();
        assert_eq!(p.daily, (0..24).map(|h| h as f64).collect::<Vec<_>>());
    }

    #[test]
    fn weekend_dip() {
        // 14 days starting Monday, weekdays at 100, weekend at 80
        let values: Vec<f64> = (0..14 * 24)
            .map(|i| if (i / 24) % 7 >= 5 { 80.0 } else { 100.0 })
            .collect();
        let s = local(values.clone());
        let weekly = weekly_profile(&s).unwrap();
        // bucket-mean oracle
        let mut sums = [0.0; 7];
        let mut counts = [0usize; 7];
        for (i, v) in values.iter().enumerate() {
            sums[(i / 24) % 7] += v;
            counts[(i / 24) % 7] += 1;
        }
        for d in 0..7 {
            assert!((weekly[d] - sums[d] / counts[d] as f64).abs() < 1e-12);
        }
        let weekday_mean = weekly[..5].iter().sum::<f64>() / 5.0;
        assert!((weekly[5] - 0.8 * weekday_mean).abs() < 1e-12);
        assert!((weekly[6] - 0.8 * weekday_mean).abs() < 1e-12);
        // the full profile set needs every month
        let err = compute_profiles(&s).unwrap_err();
        assert!(matches!(err, Error::EmptyBucket(ref b) if b == "month 2"));
    }

    #[test]
    fn normalization_rules() {
        let p = LoadProfiles {
            daily: (0..24).map(|h| h as f64).collect(),
            weekly: vec![3.0; 7],
            yearly: (0..12).map(|m| (m * m) as f64).collect(),
        };
        let v = build_profile_vector("XX", &p);
        assert_eq!(v.components.len(), VECTOR_LEN);
        for h in 0..24 {
            assert!((v.components[h] - h as f64 / 23.0).abs() < 1e-15);
        }
        assert!(v.components[24..31].iter().all(|&x| x == 0.5));
        assert_eq!(v.components[31], 0.0);
        assert_eq!(v.components[42], 1.0);
    }

    #[test]
    fn scaled_profiles_give_identical_vectors() {
        let p = LoadProfiles {
            daily: (0..24).map(|h| 50.0 + (h as f64).sin()).collect(),
            weekly: (0..7).map(|d| 70.0 - d as f64).collect(),
            yearly: (0..12).map(|m| 60.0 + (m as f64).cos()).collect(),
        };
        let scale = |v: &[f64], c: f64| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let q = LoadProfiles {
            daily: scale(&p.daily, 37.5),
            weekly: scale(&p.weekly, 37.5),
            yearly: scale(&p.yearly, 37.5),
        };
        let a = build_profile_vector("A", &p);
        let b = build_profile_vector("B", &q);
        for (x, y) in a.components.iter().zip(&b.components) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}
