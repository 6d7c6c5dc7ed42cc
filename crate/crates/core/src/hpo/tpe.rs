//! Tree-structured Parzen estimator.
//!
//! Observations are split at the γ-quantile of the objective into a good
//! and a bad group. Each dimension gets an independent density per group:
//! Laplace-smoothed frequencies for discrete choices and a Gaussian Parzen
//! window with a uniform prior component for the log learning rate. Hidden
//! layer sizes are modelled per layer position. Candidates are drawn from
//! the good densities and the one with the largest `l(x)/g(x)` wins.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpo::space::SearchSpace;
use crate::nn::mlp::Hyperparameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_candidates: usize,
    pub n_startup: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma: 0.25,
            n_candidates: 24,
            n_startup: 10,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) || self.n_startup < 2 || self.n_candidates == 0 {
            return Err(Error::InvalidInput(format!("invalid TPE settings {self:?}")));
        }
        Ok(())
    }
}

struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    fn fit(choices: &[usize], observed: impl Iterator<Item = usize>) -> Self {
        let mut counts = vec![1.0; choices.len()];
        for v in observed {
            if let Some(i) = choices.iter().position(|&c| c == v) {
                counts[i] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        Categorical {
            probs: counts.iter().map(|c| c / total).collect(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    fn log_pdf(&self, i: usize) -> f64 {
        self.probs[i].ln()
    }
}

/// Gaussian kernels on observed points plus one uniform prior component,
/// all equally weighted, over `[lo, hi]`.
struct Parzen {
    mus: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn fit(mus: Vec<f64>, lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let n = mus.len() as f64;
        let sigma = if mus.len() < 2 {
            range
        } else {
            let mean = mus.iter().sum::<f64>() / n;
            let sd = (mus.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt();
            // Scott's rule
            1.06 * sd * n.powf(-0.2)
        };
        Parzen {
            mus,
            sigma: sigma.clamp(range / 100.0, range),
            lo,
            hi,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.hi == self.lo {
            return self.lo;
        }
        let k = rng.random_range(0..=self.mus.len());
        if k == self.mus.len() {
            return rng.random_range(self.lo..self.hi);
        }
        let normal = Normal::new(self.mus[k], self.sigma).expect("positive sigma");
        for _ in 0..64 {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        self.mus[k].clamp(self.lo, self.hi)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        if self.hi == self.lo {
            return 0.0;
        }
        let norm = 1.0 / (self.sigma * (2.0 * std::f64::consts::PI).sqrt());
        let kernels: f64 = self
            .mus
            .iter()
            .map(|m| norm * (-0.5 * ((x - m) / self.sigma).powi(2)).exp())
            .sum();
        let prior = 1.0 / (self.hi - self.lo);
        ((kernels + prior) / (self.mus.len() + 1) as f64).ln()
    }
}

struct Model {
    num_layers: Categorical,
    sizes: Vec<Categorical>,
    lookback: Categorical,
    batch: Categorical,
    log_lr: Parzen,
}

impl Model {
    fn fit(space: &SearchSpace, group: &[&Hyperparameters]) -> Self {
        let (lo, hi) = space.log_lr_range();
        Model {
            num_layers: Categorical::fit(&space.num_layers, group.iter().map(|h| h.num_layers())),
            sizes: (0..space.max_layers())
                .map(|k| Categorical::fit(&space.layer_sizes, group.iter().filter_map(|h| h.layer_sizes.get(k).copied())))
                .collect(),
            lookback: Categorical::fit(&space.lookbacks, group.iter().map(|h| h.lookback)),
            batch: Categorical::fit(&space.batch_sizes, group.iter().map(|h| h.batch_size)),
            log_lr: Parzen::fit(
                group.iter().map(|h| h.learning_rate.ln().clamp(lo, hi)).collect(),
                lo,
                hi,
            ),
        }
    }
}

/// A candidate in index form, so both densities can score it.
struct Candidate {
    num_layers: usize,
    sizes: Vec<usize>,
    lookback: usize,
    batch: usize,
    log_lr: f64,
}

impl Candidate {
    fn draw<R: Rng + ?Sized>(m: &Model, space: &SearchSpace, rng: &mut R) -> Self {
        let num_layers = m.num_layers.sample(rng);
        let count = space.num_layers[num_layers];
        Candidate {
            num_layers,
            sizes: (0..count).map(|k| m.sizes[k].sample(rng)).collect(),
            lookback: m.lookback.sample(rng),
            batch: m.batch.sample(rng),
            log_lr: m.log_lr.sample(rng),
        }
    }

    fn log_pdf(&self, m: &Model) -> f64 {
        m.num_layers.log_pdf(self.num_layers)
            + self.sizes.iter().enumerate().map(|(k, &s)| m.sizes[k].log_pdf(s)).sum::<f64>()
            + m.lookback.log_pdf(self.lookback)
            + m.batch.log_pdf(self.batch)
            + m.log_lr.log_pdf(self.log_lr)
    }

    fn materialize(&self, space: &SearchSpace) -> Hyperparameters {
        Hyperparameters {
            layer_sizes: self.sizes.iter().map(|&i| space.layer_sizes[i]).collect(),
            lookback: space.lookbacks[self.lookback],
            horizon: space.horizon,
            learning_rate: space.lr_from_log(self.log_lr),
            batch_size: space.batch_sizes[self.batch],
        }
    }
}

/// Next configuration to try given the completed `(params, objective)` pairs.
pub fn tpe_suggest<R: Rng + ?Sized>(
    observed: &[(&Hyperparameters, f64)],
    space: &SearchSpace,
    cfg: &TpeConfig,
    rng: &mut R,
) -> Hyperparameters {
    let finite: Vec<_> = observed.iter().filter(|(_, y)| y.is_finite()).collect();
    if finite.len() < cfg.n_startup {
        return space.sample_uniform(rng);
    }
    let lo = finite.iter().map(|(_, y)| *y).fold(f64::INFINITY, f64::min);
    let hi = finite.iter().map(|(_, y)| *y).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return space.sample_uniform(rng);
    }
    let mut order: Vec<usize> = (0..finite.len()).collect();
    order.sort_by(|&a, &b| finite[a].1.total_cmp(&finite[b].1).then(a.cmp(&b)));
    let n_good = ((cfg.gamma * finite.len() as f64).ceil() as usize).clamp(1, finite.len() - 1);
    let good: Vec<&Hyperparameters> = order[..n_good].iter().map(|&i| finite[i].0).collect();
    let bad: Vec<&Hyperparameters> = order[n_good..].iter().map(|&i| finite[i].0).collect();
    let l = Model::fit(space, &good);
    let g = Model::fit(space, &bad);

    let mut best: Option<(f64, Candidate)> = None;
    for _ in 0..cfg.n_candidates {
        let c = Candidate::draw(&l, space, rng);
        let score = c.log_pdf(&l) - c.log_pdf(&g);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, c));
        }
    }
    best.expect("at least one candidate").1.materialize(space)
}
