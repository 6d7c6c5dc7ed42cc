//! Synthetic multi-country load generator.
//!
//! Each family fixes smooth periodic shapes for the daily, weekly and
//! yearly cycle; each country in the family draws its own base level. Load
//! at an hour is
//!
//! ```text
//! base · (1 + A_d·d(hour) + A_w·w(weekday) + A_y·y(month)) + noise
//! ```
//!
//! where `y` is evaluated at the fractional month (by day) so the yearly
//! cycle has no steps at month boundaries, and noise is Gaussian with standard
//! deviation `noise · base`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::series::{year_start, CountryMeta, Dataset, LoadSeries, SplitSpec, TimeBase};

/// A truncated Fourier series `Σ_k cos_k·cos(2πkx/P) + sin_k·sin(2πkx/P)`,
/// rescaled so its largest magnitude over one period is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonics {
    /// `(cos_k, sin_k)` for k = 1, 2, ...
    pub terms: Vec<(f64, f64)>,
}

impl Harmonics {
    pub fn new(terms: Vec<(f64, f64)>) -> Self {
        Harmonics { terms }
    }

    fn raw(&self, x: f64, period: f64) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .map(|(k, &(c, s))| {
                let arg = 2.0 * PI * (k + 1) as f64 * x / period;
                c * arg.cos() + s * arg.sin()
            })
            .sum()
    }

    fn peak(&self, period: f64) -> f64 {
        (0..2400)
            .map(|i| self.raw(period * i as f64 / 2400.0, period).abs())
            .fold(0.0, f64::max)
    }

    fn shape(&self, period: f64) -> Shape {
        let peak = self.peak(period);
        Shape {
            harmonics: self.clone(),
            period,
            scale: if peak > 0.0 { 1.0 / peak } else { 0.0 },
        }
    }
}

struct Shape {
    harmonics: Harmonics,
    period: f64,
    scale: f64,
}

impl Shape {
    fn at(&self, x: f64) -> f64 {
        self.scale * self.harmonics.raw(x, self.period)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileFamily {
    pub name: String,
    pub daily: Harmonics,
    pub weekly: Harmonics,
    pub yearly: Harmonics,
    pub daily_amplitude: f64,
    pub weekly_amplitude: f64,
    pub yearly_amplitude: f64,
    /// Noise standard deviation as a fraction of the country base.
    pub noise: f64,
    pub base_min: f64,
    pub base_max: f64,
}

impl ProfileFamily {
    pub fn validate(&self) -> Result<()> {
        let amps = [self.daily_amplitude, self.weekly_amplitude, self.yearly_amplitude];
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidInput(format!(
                "family {}: amplitudes must be non-negative",
                self.name
            )));
        }
        // shapes are normalized to unit peak, so this bounds the worst case
        if amps.iter().sum::<f64>() >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "family {}: amplitudes sum to {} and would force negative loads",
                self.name,
                amps.iter().sum::<f64>()
            )));
        }
        if !(self.noise >= 0.0) || !(self.base_min > 0.0) || self.base_max < self.base_min {
            return Err(Error::InvalidInput(format!(
                "family {}: need noise >= 0 and 0 < base_min <= base_max",
                self.name
            )));
        }
        Ok(())
    }
}

/// Two families with clearly different daily, weekly and yearly shapes:
/// a winter-peaking two-hump profile and a summer-peaking midday profile.
pub fn default_families() -> Vec<ProfileFamily> {
    vec![
        ProfileFamily {
            name: "northern".into(),
            daily: Harmonics::new(vec![(-0.8, -0.3), (-0.5, 0.2), (0.1, 0.1)]),
            weekly: Harmonics::new(vec![(0.5, 0.6), (-0.2, 0.3)]),
            yearly: Harmonics::new(vec![(1.0, 0.0), (0.2, 0.0)]),
            daily_amplitude: 0.25,
            weekly_amplitude: 0.08,
            yearly_amplitude: 0.2,
            noise: 0.015,
            base_min: 2_000.0,
            base_max: 60_000.0,
        },
        ProfileFamily {
            name: "southern".into(),
            daily: Harmonics::new(vec![(-0.9, 0.1), (0.3, -0.1)]),
            weekly: Harmonics::new(vec![(0.1, 0.2)]),
            yearly: Harmonics::new(vec![(-0.6, 0.0), (0.6, 0.0)]),
            daily_amplitude: 0.35,
            weekly_amplitude: 0.03,
            yearly_amplitude: 0.12,
            noise: 0.015,
            base_min: 2_000.0,
            base_max: 60_000.0,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub families: Vec<ProfileFamily>,
    pub countries_per_family: usize,
    pub years: u32,
    pub start_year: i32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            families: default_families(),
            countries_per_family: 3,
            years: 3,
            start_year: 2015,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    /// Planted family index per country.
    pub family_of: BTreeMap<String, usize>,
}

fn code_for(family: usize, member: usize) -> Result<String> {
    if family >= 26 || member >= 26 {
        return Err(Error::InvalidInput(
            "at most 26 families of 26 countries each".into(),
        ));
    }
    Ok(format!(
        "{}{}",
        (b'A' + family as u8) as char,
        (b'A' + member as u8) as char
    ))
}

/// Generates a seeded dataset. Countries are in UTC; splits put the last
/// two years into validation and test.
pub fn synthesize_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    if spec.families.is_empty() {
        return Err(Error::InvalidInput("need at least one profile family".into()));
    }
    if spec.years < 2 {
        return Err(Error::InvalidInput("need at least two years of data".into()));
    }
    if spec.countries_per_family == 0 {
        return Err(Error::InvalidInput("countries_per_family must be >= 1".into()));
    }
    for f in &spec.families {
        f.validate()?;
    }

    let years = spec.years as i32;
    let start = year_start(spec.start_year)?;
    let end = year_start(spec.start_year + years)?;
    let hours = end.signed_duration_since(start).num_hours() as usize;
    let splits = if years >= 3 {
        SplitSpec::from_years(
            spec.start_year + years - 2,
            spec.start_year + years - 1,
            spec.start_year + years,
        )?
    } else {
        // two years: train on the first, validate and test on halves of the second
        let val_end = year_start(spec.start_year + 1)? + Duration::days(182);
        SplitSpec::new(year_start(spec.start_year + 1)?, val_end, end)?
    };

    let mut metas = Vec::new();
    let mut series = Vec::new();
    let mut family_of = BTreeMap::new();
    for (fi, fam) in spec.families.iter().enumerate() {
        let daily = fam.daily.shape(24.0);
        let weekly = fam.weekly.shape(7.0);
        let yearly = fam.yearly.shape(12.0);
        for m in 0..spec.countries_per_family {
            let code = code_for(fi, m)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "synth", (fi * 1000 + m) as u64));
            let base = if fam.base_max > fam.base_min {
                rng.random_range(fam.base_min..fam.base_max)
            } else {
                fam.base_min
            };
            let noise = Normal::new(0.0, fam.noise * base)
                .map_err(|e| Error::InvalidInput(e.to_string()))?;
            let values: Vec<f64> = (0..hours)
                .map(|i| {
                    let t = start + Duration::hours(i as i64);
                    let days_in_month = days_in_month(t.year(), t.month());
                    // constant within a day, so hour-of-day averages see the same yearly term
                    let month_pos = t.month0() as f64 + t.day0() as f64 / days_in_month as f64;
                    let level = base
                        * (1.0
                            + fam.daily_amplitude * daily.at(t.hour() as f64)
                            + fam.weekly_amplitude
                                * weekly.at(t.weekday().num_days_from_monday() as f64)
                            + fam.yearly_amplitude * yearly.at(month_pos));
                    (level + noise.sample(&mut rng)).max(0.0)
                })
                .collect();
            metas.push(CountryMeta::new(&code, &format!("{} #{}", fam.name, m + 1), "UTC"));
            series.push(LoadSeries::from_values(&code, "UTC", TimeBase::Utc, start, values)?);
            family_of.insert(code, fi);
        }
    }
    Ok(SyntheticDataset {
        dataset: Dataset::new(metas, series, splits)?,
        family_of,
    })
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)
        .unwrap()
        .signed_duration_since(NaiveDate::from_ymd_opt(year, month, 1).unwrap())
        .num_days() as u32
}
