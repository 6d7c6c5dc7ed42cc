//! Per-country scaled samples and multi-country pools.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::eval::mape;
use crate::nn::mlp::Mlp;
use crate::nn::scaler::Scaler;
use crate::nn::window::{windows_between, SampleSet, Stride, WindowSpec};
use crate::series::{split_series, LoadSeries, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// A dense series with its split and the scaler fit on its train part.
#[derive(Debug, Clone)]
pub struct CountryData {
    pub series: LoadSeries,
    pub splits: SplitSpec,
    pub scaler: Scaler,
}

impl CountryData {
    pub fn new(series: LoadSeries, splits: SplitSpec) -> Result<Self> {
        if !series.is_complete() {
            return Err(Error::Experiment(format!(
                "{}: series still has {} missing values",
                series.country_code,
                series.missing_count()
            )));
        }
        let parts = split_series(&series, &splits)?;
        if parts.val.is_empty() || parts.test.is_empty() {
            return Err(Error::Split(format!("{}: empty validation or test partition", series.country_code)));
        }
        let scaler = Scaler::fit(parts.train.values())?;
        Ok(CountryData { series, splits, scaler })
    }

    pub fn code(&self) -> &str {
        &self.series.country_code
    }

    fn bounds(&self, part: Partition) -> (chrono::NaiveDateTime, chrono::NaiveDateTime) {
        match part {
            Partition::Train => (self.series.start(), self.splits.train_end),
            Partition::Val => (self.splits.train_end, self.splits.val_end),
            Partition::Test => (self.splits.val_end, self.splits.test_end),
        }
    }

    /// Scaled samples whose target days lie in `part`.
    pub fn samples(&self, lookback: usize, horizon: usize, stride: Stride, part: Partition) -> Result<SampleSet> {
        let (from, to) = self.bounds(part);
        let spec = WindowSpec {
            lookback,
            horizon,
            stride,
        };
        windows_between(&self.series, &spec, Some(&self.scaler), from, to)
    }
}

/// Training rows pooled over countries; validation kept per country so
/// errors can be measured in each country's own units.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train: SampleSet,
    pub val: SampleSet,
    pub val_parts: Vec<(Scaler, SampleSet)>,
}

impl TrainingData {
    pub fn pooled(countries: &[&CountryData], lookback: usize, horizon: usize, stride: Stride) -> Result<Self> {
        if countries.is_empty() {
            return Err(Error::Experiment("no countries to pool".into()));
        }
        let mut train = Vec::new();
        let mut val_parts = Vec::new();
        for c in countries {
            train.push(c.samples(lookback, horizon, stride, Partition::Train)?);
            val_parts.push((c.scaler, c.samples(lookback, horizon, stride, Partition::Val)?));
        }
        let train = SampleSet::concat(&train)?;
        let vals: Vec<SampleSet> = val_parts.iter().map(|(_, s)| s.clone()).collect();
        let val = SampleSet::concat(&vals)?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Experiment(format!(
                "lookback {lookback} leaves no training or validation samples"
            )));
        }
        Ok(TrainingData { train, val, val_parts })
    }

    /// Validation MAPE over every hourly point of every part, in MW.
    pub fn val_mape(&self, predict: &dyn Fn(&SampleSet) -> Result<Array2<f64>>) -> Result<f64> {
        let mut actual = Vec::new();
        let mut forecast = Vec::new();
        for (scaler, set) in &self.val_parts {
            if set.is_empty() {
                continue;
            }
            let out = predict(set)?;
            actual.extend(set.targets.iter().map(|&z| scaler.invert(z)));
            forecast.extend(out.iter().map(|&z| scaler.invert(z)));
        }
        mape(&actual, &forecast)
    }

    pub fn model_val_mape(&self, model: &Mlp) -> Result<f64> {
        self.val_mape(&|s: &SampleSet| model.predict(s.inputs.view()))
    }
}

/// Training data per lookback, built once and shared by search trials.
pub fn training_data_by_lookback(
    countries: &[&CountryData],
    lookbacks: &[usize],
    horizon: usize,
    stride: Stride,
) -> Result<BTreeMap<usize, TrainingData>> {
    lookbacks
        .iter()
        .map(|&l| Ok((l, TrainingData::pooled(countries, l, horizon, stride)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{year_start, TimeBase};

    fn country(code: &str, level: f64) -> CountryData {
        let start = year_start(2019).unwrap();
        let n = 24 * (365 + 366 + 365);
        let v: Vec<f64> = (0..n).map(|i| level + (i % 24) as f64 + (i % 168) as f64 * 0.1).collect();
        let s = LoadSeries::from_values(code, "UTC", TimeBase::Local, start, v).unwrap();
        CountryData::new(s, SplitSpec::from_years(2020, 2021, 2022).unwrap()).unwrap()
    }

    #[test]
    fn scaler_from_train_only() {
        let c = country("AA", 100.0);
        let train = &c.series.values()[..24 * 365];
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        assert!((c.scaler.mean - mean).abs() < 1e-9);
        let test = c.samples(168, 24, Stride::Daily, Partition::Test).unwrap();
        let raw = c.series.values()[24 * (365 + 366)];
        assert!((test.targets[[0, 0]] - (raw - mean) / c.scaler.std).abs() < 1e-12);
    }

    #[test]
    fn partitions_are_disjoint() {
        let c = country("AA", 100.0);
        let tr = c.samples(168, 24, Stride::Daily, Partition::Train).unwrap();
        let va = c.samples(168, 24, Stride::Daily, Partition::Val).unwrap();
        let te = c.samples(168, 24, Stride::Daily, Partition::Test).unwrap();
        assert_eq!(tr.len(), 365 - 7);
        assert_eq!(va.len(), 366);
        assert_eq!(te.len(), 365);
        assert!(tr.origins.last() < va.origins.first());
        assert!(va.origins.last() < te.origins.first());
    }

    #[test]
    fn pooled_counts_add_up() {
        let a = country("AA", 100.0);
        let b = country("AB", 100.0);
        let single = TrainingData::pooled(&[&a], 168, 24, Stride::Daily).unwrap();
        let both = TrainingData::pooled(&[&a, &b], 168, 24, Stride::Daily).unwrap();
        assert_eq!(both.train.len(), 2 * single.train.len());
        assert_eq!(both.val.len(), 2 * single.val.len());
    }

    #[test]
    fn incomplete_series_rejected() {
        let start = year_start(2019).unwrap();
        let mut r: Vec<Option<f64>> = (0..24 * 1096).map(|i| Some(i as f64)).collect();
        r[5] = None;
        let s = LoadSeries::from_options("AA", "UTC", TimeBase::Local, start, &r).unwrap();
        assert!(CountryData::new(s, SplitSpec::from_years(2020, 2021, 2022).unwrap()).is_err());
    }
}
