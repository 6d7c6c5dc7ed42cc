use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, Hyperparameters, Mlp};
use crate::nn::scaler::Scaler;
use crate::nn::train::{train, EpochRecord, History, TrainConfig};
use crate::nn::window::SampleSet;
use crate::seed::derive_seed;

/// Identically configured members whose mean forecast is mapped back to MW
/// with the target scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Mlp>,
    pub scaler: Scaler,
}

/// A trained member together with its training record.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub model: Mlp,
    pub history: History,
    /// Seed used for the run that succeeded.
    pub seed: u64,
    pub retried: bool,
}

impl EnsembleModel {
    pub fn new(members: Vec<Mlp>, scaler: Scaler) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Experiment("an ensemble needs at least one member".into()))?;
        if members
            .iter()
            .any(|m| m.hyper != first.hyper || m.activation != first.activation)
        {
            return Err(Error::Experiment("ensemble members must share one architecture".into()));
        }
        Ok(EnsembleModel { members, scaler })
    }

    pub fn lookback(&self) -> usize {
        self.members[0].input_dim()
    }

    /// Member mean in scaled units, one row per input row.
    pub fn predict_scaled(&self, inputs: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut sum = self.members[0].predict(inputs)?;
        for m in &self.members[1..] {
            sum += &m.predict(inputs)?;
        }
        Ok(sum / self.members.len() as f64)
    }

    /// Forecast in MW for every row of `set`.
    pub fn predict_set(&self, set: &SampleSet) -> Result<Array2<f64>> {
        Ok(self.predict_scaled(set.inputs.view())?.mapv(|z| self.scaler.invert(z)))
    }
}

/// Mean of the members' outputs for one scaled window, inverted to MW.
pub fn ensemble_predict(ensemble: &EnsembleModel, window: ArrayView1<f64>) -> Result<Array1<f64>> {
    let batch = window.insert_axis(ndarray::Axis(0));
    Ok(ensemble.predict_scaled(batch)?.row(0).mapv(|z| ensemble.scaler.invert(z)))
}

/// Bit-exact copy of a trained source model.
pub fn warm_start(source: &Mlp) -> Mlp {
    source.clone()
}

/// Continues training on target data. A zero epoch budget returns the
/// model untouched.
pub fn fine_tune(model: Mlp, train_set: &SampleSet, val_set: &SampleSet, cfg: &TrainConfig) -> Result<(Mlp, History)> {
    if cfg.max_epochs == 0 {
        let val_loss = model.loss(val_set.inputs.view(), val_set.targets.view())?;
        let train_loss = model.loss(train_set.inputs.view(), train_set.targets.view())?;
        let history = History {
            epochs: vec![EpochRecord {
                epoch: 0,
                train_loss,
                val_loss,
            }],
            best_epoch: 0,
            best_val_loss: val_loss,
            halted: false,
        };
        return Ok((model, history));
    }
    train(model, train_set, val_set, cfg)
}

/// Runs `job(seed)` with the member seed, retrying once with an alternate
/// seed if training diverges.
fn with_retry(
    master_seed: u64,
    role: &str,
    index: usize,
    job: &(dyn Fn(u64) -> Result<(Mlp, History)> + Sync),
) -> Result<MemberRun> {
    let seed = derive_seed(master_seed, role, index as u64);
    match job(seed) {
        Ok((model, history)) => Ok(MemberRun {
            model,
            history,
            seed,
            retried: false,
        }),
        Err(Error::Diverged { epoch, message }) => {
            log::warn!("{role} member {index} diverged at epoch {epoch} ({message}), retrying");
            let alt = derive_seed(master_seed, &format!("{role}-retry"), index as u64);
            let (model, history) = job(alt)?;
            Ok(MemberRun {
                model,
                history,
                seed: alt,
                retried: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// `n` members trained from scratch; member `i` is initialized and shuffled
/// with seeds derived from `(master_seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn train_ensemble(
    hyper: &Hyperparameters,
    activation: Activation,
    train_set: &SampleSet,
    val_set: &SampleSet,
    cfg: &TrainConfig,
    n: usize,
    master_seed: u64,
) -> Result<Vec<MemberRun>> {
    if n == 0 {
        return Err(Error::Experiment("ensemble size must be at least 1".into()));
    }
    let job = |seed: u64| {
        let model = Mlp::new(hyper.clone(), activation, seed)?;
        let member_cfg = TrainConfig {
            seed: derive_seed(seed, "shuffle", 0),
            ..cfg.clone()
        };
        train(model, train_set, val_set, &member_cfg)
    };
    (0..n)
        .into_par_iter()
        .map(|i| with_retry(master_seed, "member", i, &job))
        .collect()
}

/// `n` warm-started copies of `source`, each fine-tuned with its own
/// shuffling seed.
pub fn fine_tune_ensemble(
    source: &Mlp,
    train_set: &SampleSet,
    val_set: &SampleSet,
    cfg: &TrainConfig,
    n: usize,
    master_seed: u64,
) -> Result<Vec<MemberRun>> {
    if n == 0 {
        return Err(Error::Experiment("ensemble size must be at least 1".into()));
    }
    let job = |seed: u64| {
        let member_cfg = TrainConfig { seed, ..cfg.clone() };
        fine_tune(warm_start(source), train_set, val_set, &member_cfg)
    };
    (0..n)
        .into_par_iter()
        .map(|i| with_retry(master_seed, "finetune", i, &job))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Layer;
    use crate::nn::persist::to_text;
    use chrono::NaiveDateTime;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hyper() -> Hyperparameters {
        Hyperparameters {
            layer_sizes: vec![6],
            lookback: 8,
            horizon: 4,
            learning_rate: 1e-2,
            batch_size: 8,
        }
    }

    fn samples(n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = Array2::from_shape_simple_fn((n, 8), || rng.random_range(-1.0..1.0));
        let targets = Array2::from_shape_fn((n, 4), |(i, h)| inputs[[i, h]] - 0.5 * inputs[[i, h + 4]]);
        SampleSet {
            inputs,
            targets,
            origins: vec![NaiveDateTime::default(); n],
        }
    }

    fn constant_member(c: f64) -> Mlp {
        let h = hyper();
        let mut out = Layer::zeros(6, 4);
        out.bias.fill(c);
        Mlp::from_layers(h, Activation::Relu, vec![Layer::zeros(8, 6), out]).unwrap()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            max_epochs: 20,
            patience: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn mean_of_constant_members() {
        let unit = Scaler { mean: 0.0, std: 1.0 };
        let e = EnsembleModel::new(vec![constant_member(1.0), constant_member(3.0)], unit).unwrap();
        let p = ensemble_predict(&e, Array1::zeros(8).view()).unwrap();
        assert_eq!(p.to_vec(), vec![2.0; 4]);
    }

    #[test]
    fn single_member_and_identical_members() {
        let s = Scaler { mean: 100.0, std: 10.0 };
        let m = Mlp::new(hyper(), Activation::Relu, 3).unwrap();
        let x = Array1::from_shape_fn(8, |i| i as f64 * 0.1);
        let direct = m.forward(x.view()).unwrap().mapv(|z| s.invert(z));
        let one = EnsembleModel::new(vec![m.clone()], s).unwrap();
        assert_eq!(ensemble_predict(&one, x.view()).unwrap(), direct);
        let many = EnsembleModel::new(vec![m.clone(); 5], s).unwrap();
        let p = ensemble_predict(&many, x.view()).unwrap();
        for (a, b) in p.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_matches_summation_oracle() {
        let s = Scaler { mean: 5000.0, std: 300.0 };
        let members: Vec<Mlp> = (0..20).map(|i| Mlp::new(hyper(), Activation::Tanh, i).unwrap()).collect();
        let e = EnsembleModel::new(members.clone(), s).unwrap();
        let x = Array1::from_shape_fn(8, |i| (i as f64).cos());
        let p = ensemble_predict(&e, x.view()).unwrap();
        for h in 0..4 {
            let mut sum = 0.0;
            for m in &members {
                sum += m.forward(x.view()).unwrap()[h];
            }
            let oracle = s.invert(sum / 20.0);
            assert!((p[h] - oracle).abs() <= 1e-12 * oracle.abs());
        }
    }

    #[test]
    fn mixed_architectures_rejected() {
        let mut other = hyper();
        other.layer_sizes = vec![7];
        let a = Mlp::new(hyper(), Activation::Relu, 0).unwrap();
        let b = Mlp::new(other, Activation::Relu, 0).unwrap();
        assert!(EnsembleModel::new(vec![a, b], Scaler { mean: 0.0, std: 1.0 }).is_err());
        assert!(EnsembleModel::new(vec![], Scaler { mean: 0.0, std: 1.0 }).is_err());
    }

    #[test]
    fn ensemble_is_deterministic_and_diverse() {
        let tr = samples(64, 1);
        let va = samples(16, 2);
        let a = train_ensemble(&hyper(), Activation::Relu, &tr, &va, &cfg(), 4, 9).unwrap();
        let b = train_ensemble(&hyper(), Activation::Relu, &tr, &va, &cfg(), 4, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.model.parameters(), y.model.parameters());
        }
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                assert_ne!(a[i].model.parameters(), a[j].model.parameters());
            }
        }
    }

    #[test]
    fn warm_start_is_an_independent_copy() {
        let source = Mlp::new(hyper(), Activation::Relu, 4).unwrap();
        let mut target = warm_start(&source);
        assert_eq!(to_text(&target), to_text(&source));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let x = Array1::from_shape_simple_fn(8, || rng.random_range(-3.0..3.0));
            assert_eq!(target.forward(x.view()).unwrap(), source.forward(x.view()).unwrap());
        }
        target.layers[0].weights[[0, 0]] += 1.0;
        assert_ne!(target, source);
        assert_eq!(source, Mlp::new(hyper(), Activation::Relu, 4).unwrap());
    }

    #[test]
    fn zero_epoch_budget_is_zero_shot() {
        let source = Mlp::new(hyper(), Activation::Relu, 4).unwrap();
        let zero = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (m, h) = fine_tune(warm_start(&source), &samples(8, 1), &samples(8, 2), &zero).unwrap();
        assert_eq!(m, source);
        assert_eq!(h.epochs_run(), 0);
    }

    #[test]
    fn fine_tuning_never_worse_than_start() {
        let tr = samples(64, 1);
        let va = samples(16, 2);
        let source = Mlp::new(hyper(), Activation::Relu, 4).unwrap();
        let start = source.loss(va.inputs.view(), va.targets.view()).unwrap();
        let runs = fine_tune_ensemble(&source, &tr, &va, &cfg(), 3, 1).unwrap();
        for r in runs {
            let end = r.model.loss(va.inputs.view(), va.targets.view()).unwrap();
            assert!(end <= start);
            assert_eq!(end, r.history.best_val_loss);
        }
    }

    #[test]
    fn divergence_retried_once_then_fails() {
        let mut tr = samples(16, 1);
        tr.targets[[0, 0]] = f64::NAN;
        let err = train_ensemble(&hyper(), Activation::Relu, &tr, &samples(4, 2), &cfg(), 1, 0).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }
}
