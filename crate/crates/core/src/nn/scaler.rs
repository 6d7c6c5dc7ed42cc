use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-country z-score transform fitted on the training period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: f64,
    pub std: f64,
}

impl Scaler {
    /// Population mean and standard deviation; rejects constant input.
    pub fn fit(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidInput("scaler needs at least two values".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::InvalidInput("cannot scale a constant series".into()));
        }
        Ok(Scaler { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_all(&self, zs: &[f64]) -> Vec<f64> {
        zs.iter().map(|&z| self.invert(z)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_fit() {
        let s = Scaler::fit(&[0.0, 2.0]).unwrap();
        assert_eq!(s, Scaler { mean: 1.0, std: 1.0 });
        assert_eq!(s.apply_all(&[0.0, 2.0]), vec![-1.0, 1.0]);
    }

    #[test]
    fn constant_rejected() {
        assert!(Scaler::fit(&[5.0; 10]).is_err());
        assert!(Scaler::fit(&[5.0]).is_err());
    }

    proptest! {
        #[test]
        fn invert_apply_identity(xs in proptest::collection::vec(0.0f64..1e5, 2..100)) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let s = Scaler::fit(&xs).unwrap();
            for &x in &xs {
                let back = s.invert(s.apply(x));
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(s.mean.abs()));
            }
        }
    }
}
