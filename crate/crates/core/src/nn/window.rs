//! Supervised samples cut from an hourly series.
//!
//! Each sample pairs `lookback` consecutive values (the input window) with
//! the `horizon` values that follow (the forecast target). With the default
//! daily stride every target starts at local midnight.

use chrono::NaiveDateTime;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::scaler::Scaler;
use crate::series::LoadSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stride {
    /// One sample per calendar day, target anchored at midnight.
    Daily,
    /// One sample per hour.
    Hourly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: Stride,
}

impl WindowSpec {
    pub fn daily(lookback: usize, horizon: usize) -> Self {
        WindowSpec {
            lookback,
            horizon,
            stride: Stride::Daily,
        }
    }
}

/// Inputs and targets stacked row-wise, plus the timestamp of each target's
/// first hour.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub origins: Vec<NaiveDateTime>,
}

impl SampleSet {
    pub fn empty(lookback: usize, horizon: usize) -> Self {
        SampleSet {
            inputs: Array2::zeros((0, lookback)),
            targets: Array2::zeros((0, horizon)),
            origins: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookback(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.targets.ncols()
    }

    /// Rows `rows`, in that order.
    pub fn select(&self, rows: &[usize]) -> SampleSet {
        SampleSet {
            inputs: self.inputs.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
            origins: rows.iter().map(|&r| self.origins[r]).collect(),
        }
    }

    /// Stacks several sets with equal shapes.
    pub fn concat(sets: &[SampleSet]) -> Result<SampleSet> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
        let (l, h) = (first.lookback(), first.horizon());
        if let Some(bad) = sets.iter().find(|s| s.lookback() != l || s.horizon() != h) {
            return Err(Error::Dimension {
                expected: l,
                actual: bad.lookback(),
            });
        }
        let inputs: Vec<_> = sets.iter().map(|s| s.inputs.view()).collect();
        let targets: Vec<_> = sets.iter().map(|s| s.targets.view()).collect();
        Ok(SampleSet {
            inputs: ndarray::concatenate(Axis(0), &inputs).expect("equal widths"),
            targets: ndarray::concatenate(Axis(0), &targets).expect("equal widths"),
            origins: sets.iter().flat_map(|s| s.origins.iter().copied()).collect(),
        })
    }
}

/// Positions of the first target hour of every sample whose target lies
/// inside `[from, to)`. History may reach back before `from`.
pub fn target_starts(
    series: &LoadSeries,
    spec: &WindowSpec,
    from: NaiveDateTime,
    to: NaiveDateTime,
) -> Vec<usize> {
    let n = series.len();
    if n < spec.lookback + spec.horizon {
        return Vec::new();
    }
    (spec.lookback..=n - spec.horizon)
        .filter(|&t| spec.stride == Stride::Hourly || series.hour_of_day(t) == 0)
        .filter(|&t| {
            series.timestamp(t) >= from && series.timestamp(t + spec.horizon - 1) < to
        })
        .collect()
}

/// Samples whose targets fall in `[from, to)`, optionally z-scored.
pub fn windows_between(
    series: &LoadSeries,
    spec: &WindowSpec,
    scaler: Option<&Scaler>,
    from: NaiveDateTime,
    to: NaiveDateTime,
) -> Result<SampleSet> {
    if spec.lookback == 0 || spec.horizon == 0 {
        return Err(Error::InvalidInput("lookback and horizon must be positive".into()));
    }
    let starts = target_starts(series, spec, from, to);
    let values = series.values();
    let mask = series.missing_mask();
    let scale = |v: f64| scaler.map_or(v, |s| s.apply(v));
    let mut inputs = Array2::zeros((starts.len(), spec.lookback));
    let mut targets = Array2::zeros((starts.len(), spec.horizon));
    for (row, &t) in starts.iter().enumerate() {
        let span = t - spec.lookback..t + spec.horizon;
        if let Some(i) = span.clone().find(|&i| mask[i]) {
            return Err(Error::InvalidInput(format!(
                "{}: missing value at {} inside a window",
                series.country_code,
                series.timestamp(i)
            )));
        }
        for (j, i) in (t - spec.lookback..t).enumerate() {
            inputs[[row, j]] = scale(values[i]);
        }
        for h in 0..spec.horizon {
            targets[[row, h]] = scale(values[t + h]);
        }
    }
    Ok(SampleSet {
        inputs,
        targets,
        origins: starts.iter().map(|&t| series.timestamp(t)).collect(),
    })
}

/// All samples of a dense series in raw units.
pub fn make_windows(series: &LoadSeries, spec: &WindowSpec) -> Result<SampleSet> {
    let set = windows_between(series, spec, None, series.start(), series.end())?;
    if set.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: series of {} hours is too short for lookback {} and horizon {}",
            series.country_code,
            series.len(),
            spec.lookback,
            spec.horizon
        )));
    }
    Ok(set)
}
