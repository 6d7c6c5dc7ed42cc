use crate::error::{Error, Result};
use crate::series::LoadSeries;

pub const SEASON: usize = 168;

/// Forecast for the 24 hours starting at position `day_start`: the values
/// observed one week earlier.
pub fn snaive_forecast(series: &LoadSeries, day_start: usize, horizon: usize) -> Result<Vec<f64>> {
    if day_start < SEASON {
        return Err(Error::InvalidInput(format!(
            "{}: position {day_start} has less than {SEASON} hours of history",
            series.country_code
        )));
    }
    (0..horizon)
        .map(|h| {
            let i = day_start - SEASON + h;
            if i >= series.len() {
                return Err(Error::InvalidInput(format!("position {i} beyond the series end")));
            }
            series
                .get(i)
                .ok_or_else(|| Error::InvalidInput(format!("{}: missing value at {}", series.country_code, series.timestamp(i))))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::mape;
    use crate::series::{year_start, TimeBase};

    fn series(f: impl Fn(usize) -> f64, n: usize) -> LoadSeries {
        let v = (0..n).map(f).collect();
        LoadSeries::from_values("XX", "UTC", TimeBase::Local, year_start(2020).unwrap(), v).unwrap()
    }

    #[test]
    fn weekly_periodic_is_exact() {
        let s = series(|i| 100.0 + ((i % 168) as f64).sin().abs() * 50.0, 24 * 30);
        for day in 7..30 - 1 {
            let t = day * 24;
            let f = snaive_forecast(&s, t, 24).unwrap();
            let y: Vec<f64> = (0..24).map(|h| s.values()[t + h]).collect();
            assert_eq!(mape(&y, &f).unwrap(), 0.0);
        }
    }

    #[test]
    fn daily_periodic_is_exact() {
        let s = series(|i| 1.0 + (i % 24) as f64, 24 * 10);
        let f = snaive_forecast(&s, 24 * 8, 24).unwrap();
        assert_eq!(f, (1..=24).map(|v| v as f64).collect::<Vec<_>>());
    }

    #[test]
    fn ramp_undershoots_by_a_week() {
        let s = series(|i| i as f64, 24 * 10);
        let t = 24 * 8 + 5;
        let f = snaive_forecast(&s, t, 24).unwrap();
        for (h, v) in f.iter().enumerate() {
            assert_eq!(s.values()[t + h] - v, 168.0);
        }
    }

    #[test]
    fn insufficient_history() {
        let s = series(|i| i as f64, 24 * 10);
        assert!(snaive_forecast(&s, 167, 24).is_err());
    }
}
