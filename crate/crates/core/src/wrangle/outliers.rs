use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDateTime};

use crate::error::{Error, Result};
use crate::series::LoadSeries;

pub const DEFAULT_MULTIPLIER: f64 = 4.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RemovedOutlier {
    pub timestamp: NaiveDateTime,
    pub value: f64,
    pub month_mean: f64,
    pub month_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub country_code: String,
    pub removed: Vec<RemovedOutlier>,
    pub threshold_multiplier: f64,
}

/// Mean and sample standard deviation (n − 1 denominator) of one
/// calendar month. `None` for fewer than two observations.
pub fn month_stats(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Some((mean, (ss / (n - 1) as f64).sqrt()))
}

/// Masks every value further than `multiplier` standard deviations from
/// the mean of its (year, month) group. Statistics come from the input
/// series; a single pass is made.
pub fn remove_outliers(series: &LoadSeries, multiplier: f64) -> Result<(LoadSeries, OutlierReport)> {
    if !(multiplier > 0.0) || !multiplier.is_finite() {
        return Err(Error::InvalidInput(format!(
            "outlier multiplier must be positive, got {multiplier}"
        )));
    }
    let mut groups: BTreeMap<(i32, u32), Vec<usize>> = BTreeMap::new();
    for i in 0..series.len() {
        if !series.is_missing(i) {
            let t = series.timestamp(i);
            groups.entry((t.year(), t.month())).or_default().push(i);
        }
    }

    let mut readings = series.readings();
    let mut removed = Vec::new();
    for idx in groups.values() {
        let vals: Vec<f64> = idx.iter().map(|&i| series.values()[i]).collect();
        let Some((mean, std)) = month_stats(&vals) else {
            continue;
        };
        let limit = multiplier * std;
        for (&i, &v) in idx.iter().zip(&vals) {
            if (v - mean).abs() > limit {
                readings[i] = None;
                removed.push(RemovedOutlier {
                    timestamp: series.timestamp(i),
                    value: v,
                    month_mean: mean,
                    month_std: std,
                });
            }
        }
    }
    removed.sort_by_key(|r| r.timestamp);
    let cleaned = series.rebuild(series.timebase, series.start(), &readings)?;
    Ok((
        cleaned,
        OutlierReport {
            country_code: series.country_code.clone(),
            removed,
            threshold_multiplier: multiplier,
        },
    ))
}
