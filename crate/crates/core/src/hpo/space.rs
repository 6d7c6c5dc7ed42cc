use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{Hyperparameters, HORIZON};

/// Discrete choices per dimension plus a log-uniform learning-rate range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub num_layers: Vec<usize>,
    pub layer_sizes: Vec<usize>,
    pub lookbacks: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub lr_min: f64,
    pub lr_max: f64,
    pub horizon: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            num_layers: vec![2, 3, 4, 5, 6],
            layer_sizes: vec![128, 256, 512, 1024, 2048],
            lookbacks: vec![168, 336, 504, 672],
            batch_sizes: vec![256, 512, 1024],
            lr_min: 1e-5,
            lr_max: 1e-4,
            horizon: HORIZON,
        }
    }
}

impl SearchSpace {
    /// Narrow space for quick runs on small synthetic data.
    pub fn desk() -> Self {
        SearchSpace {
            num_layers: vec![2, 3],
            layer_sizes: vec![16, 32, 64],
            lookbacks: vec![168, 336],
            batch_sizes: vec![16, 32, 64],
            lr_min: 3e-4,
            lr_max: 3e-3,
            horizon: HORIZON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sets = [
            ("num_layers", &self.num_layers),
            ("layer_sizes", &self.layer_sizes),
            ("lookbacks", &self.lookbacks),
            ("batch_sizes", &self.batch_sizes),
        ];
        for (name, set) in sets {
            if set.is_empty() || set.contains(&0) {
                return Err(Error::InvalidInput(format!("search dimension {name} must be non-empty and positive")));
            }
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning-rate range [{}, {}] is invalid",
                self.lr_min, self.lr_max
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn max_layers(&self) -> usize {
        self.num_layers.iter().copied().max().unwrap_or(0)
    }

    pub fn log_lr_range(&self) -> (f64, f64) {
        (self.lr_min.ln(), self.lr_max.ln())
    }

    pub fn contains(&self, h: &Hyperparameters) -> bool {
        self.num_layers.contains(&h.num_layers())
            && h.layer_sizes.iter().all(|s| self.layer_sizes.contains(s))
            && self.lookbacks.contains(&h.lookback)
            && self.batch_sizes.contains(&h.batch_size)
            && h.learning_rate >= self.lr_min
            && h.learning_rate <= self.lr_max
            && h.horizon == self.horizon
    }

    /// Uniform over every discrete set, log-uniform over the learning rate.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Hyperparameters {
        let n = *self.num_layers.choose(rng).expect("validated");
        let layer_sizes = (0..n).map(|_| *self.layer_sizes.choose(rng).expect("validated")).collect();
        let lookback = *self.lookbacks.choose(rng).expect("validated");
        let batch_size = *self.batch_sizes.choose(rng).expect("validated");
        Hyperparameters {
            layer_sizes,
            lookback,
            horizon: self.horizon,
            learning_rate: self.lr_from_log(self.sample_log_lr(rng)),
            batch_size,
        }
    }

    pub(crate) fn sample_log_lr<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.log_lr_range();
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    }

    /// Back from log space, clamped so rounding never leaves the range.
    pub(crate) fn lr_from_log(&self, x: f64) -> f64 {
        x.exp().clamp(self.lr_min, self.lr_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_matches_published_grid() {
        let s = SearchSpace::default();
        s.validate().unwrap();
        assert_eq!(s.max_layers(), 6);
        assert_eq!((s.lr_min, s.lr_max), (1e-5, 1e-4));
        assert_eq!(s.horizon, 24);
    }

    #[test]
    fn uniform_samples_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in [SearchSpace::default(), SearchSpace::desk()] {
            for _ in 0..1000 {
                let h = s.sample_uniform(&mut rng);
                assert!(s.contains(&h), "{h:?}");
                h.validate().unwrap();
            }
        }
    }

    #[test]
    fn invalid_spaces() {
        let mut s = SearchSpace::default();
        s.lookbacks.clear();
        assert!(s.validate().is_err());
        let s = SearchSpace {
            lr_min: 1e-3,
            lr_max: 1e-4,
            ..SearchSpace::default()
        };
        assert!(s.validate().is_err());
    }
}
