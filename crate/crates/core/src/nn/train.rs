//! Mini-batch ADAM training with early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::mlp::Mlp;
use crate::nn::window::SampleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 200,
            patience: 10,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.max_epochs < self.patience {
            return Err(Error::InvalidInput(format!(
                "need patience >= 1 and max_epochs >= patience (got {} and {})",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Per-epoch losses. Entry 0 holds the losses of the initial parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Set when an observer halted training.
    pub halted: bool,
}

impl History {
    /// Number of passes over the training data actually made.
    pub fn epochs_run(&self) -> usize {
        self.epochs.len() - 1
    }
}

/// Observer verdict after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Halt,
}

pub fn train(model: Mlp, train_set: &SampleSet, val_set: &SampleSet, cfg: &TrainConfig) -> Result<(Mlp, History)> {
    train_observed(model, train_set, val_set, cfg, &mut |_| Control::Continue)
}

/// Trains until validation loss has not strictly improved for `patience`
/// epochs, `max_epochs` is reached, or `observer` halts. Returns the
/// parameters of the best validation epoch, which may be the initial ones.
pub fn train_observed(
    mut model: Mlp,
    train_set: &SampleSet,
    val_set: &SampleSet,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord) -> Control,
) -> Result<(Mlp, History)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidInput("training and validation sets must be non-empty".into()));
    }
    let batch = model.hyper.batch_size;
    let mut adam = Adam::new(&model, model.hyper.learning_rate, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let diverged = |epoch: usize, what: &str| Error::Diverged {
        epoch,
        message: format!("{what} is not finite"),
    };
    let initial = EpochRecord {
        epoch: 0,
        train_loss: model.loss(train_set.inputs.view(), train_set.targets.view())?,
        val_loss: model.loss(val_set.inputs.view(), val_set.targets.view())?,
    };
    if !initial.val_loss.is_finite() {
        return Err(diverged(0, "validation loss"));
    }
    let mut history = History {
        epochs: vec![initial],
        best_epoch: 0,
        best_val_loss: initial.val_loss,
        halted: false,
    };
    let mut best = model.clone();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let b = train_set.select(chunk);
            let (grads, loss) = model
                .gradients(b.inputs.view(), b.targets.view())
                .map_err(|_| diverged(epoch, "training loss"))?;
            adam.step(&mut model, &grads)?;
            total += loss * chunk.len() as f64;
        }
        let val_loss = model.loss(val_set.inputs.view(), val_set.targets.view())?;
        if !val_loss.is_finite() {
            return Err(diverged(epoch, "validation loss"));
        }
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
        };
        history.epochs.push(record);
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.clone();
        }
        if observer(&record) == Control::Halt {
            history.halted = true;
            break;
        }
        if epoch - history.best_epoch >= cfg.patience {
            break;
        }
    }
    log::debug!(
        "trained {} epochs, best epoch {} (val loss {:.6})",
        history.epochs_run(),
        history.best_epoch,
        history.best_val_loss
    );
    Ok((best, history))
}
