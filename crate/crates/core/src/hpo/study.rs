use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpo::prune::{should_prune, PruneConfig};
use crate::hpo::space::SearchSpace;
use crate::hpo::tpe::{tpe_suggest, TpeConfig};
use crate::nn::mlp::Hyperparameters;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Pruned,
    Complete,
    Failed,
}

impl TrialStatus {
    pub fn name(self) -> &'static str {
        match self {
            TrialStatus::Running => "running",
            TrialStatus::Pruned => "pruned",
            TrialStatus::Complete => "complete",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub params: Hyperparameters,
    pub seed: u64,
    pub status: TrialStatus,
    /// Validation MAPE in percent, set for complete trials.
    pub objective: Option<f64>,
    /// Validation loss at each rung the trial reached.
    pub rung_losses: Vec<Option<f64>>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_trials: usize,
    pub seed: u64,
    /// Trials evaluated concurrently per batch; 1 is fully sequential.
    pub parallelism: usize,
    pub tpe: TpeConfig,
    pub prune: PruneConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_trials: 100,
            seed: 0,
            parallelism: 1,
            tpe: TpeConfig::default(),
            prune: PruneConfig::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 || self.parallelism == 0 {
            return Err(Error::InvalidInput("study needs at least one trial and one worker".into()));
        }
        self.tpe.validate()?;
        self.prune.validate()
    }
}

/// Collects one trial's rung losses and decides pruning against the trials
/// that reached the same rung before it.
#[derive(Debug, Clone)]
pub struct RungReporter {
    prune: PruneConfig,
    peers: Vec<Vec<f64>>,
    losses: Vec<Option<f64>>,
    pruned: bool,
}

impl RungReporter {
    pub fn new(prune: PruneConfig, peers: Vec<Vec<f64>>) -> Self {
        let n = prune.rungs.len();
        RungReporter {
            prune,
            peers,
            losses: vec![None; n],
            pruned: false,
        }
    }

    /// A reporter with no peers, which never prunes.
    pub fn detached() -> Self {
        RungReporter::new(PruneConfig::default(), Vec::new())
    }

    /// Records the validation loss after `epoch`; returns true when the trial
    /// should stop.
    pub fn report(&mut self, epoch: usize, loss: f64) -> bool {
        let Some(k) = self.prune.rung_index(epoch) else {
            return false;
        };
        self.losses[k] = Some(loss);
        let mut reported = self.peers.get(k).cloned().unwrap_or_default();
        reported.push(loss);
        if should_prune(loss, &reported, self.prune.eta) {
            self.pruned = true;
        }
        self.pruned
    }

    pub fn pruned(&self) -> bool {
        self.pruned
    }
}

#[derive(Debug, Clone)]
pub struct StudyState {
    pub config: StudyConfig,
    pub trials: Vec<Trial>,
    rng: ChaCha8Rng,
}

impl StudyState {
    pub fn new(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "tpe", 0));
        Ok(StudyState {
            config,
            trials: Vec::new(),
            rng,
        })
    }

    pub fn suggest(&mut self, space: &SearchSpace) -> Hyperparameters {
        let observed: Vec<(&Hyperparameters, f64)> = self
            .trials
            .iter()
            .filter_map(|t| t.objective.filter(|_| t.status == TrialStatus::Complete).map(|y| (&t.params, y)))
            .collect();
        tpe_suggest(&observed, space, &self.config.tpe, &mut self.rng)
    }

    /// Losses reported at each rung so far.
    pub fn rung_peers(&self) -> Vec<Vec<f64>> {
        (0..self.config.prune.rungs.len())
            .map(|k| self.trials.iter().filter_map(|t| t.rung_losses.get(k).copied().flatten()).collect())
            .collect()
    }

    /// Complete trial with the lowest objective; earliest wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Complete)
            .filter(|t| t.objective.is_some_and(f64::is_finite))
            .min_by(|a, b| a.objective.unwrap().total_cmp(&b.objective.unwrap()))
    }

    pub fn log_csv(&self) -> String {
        let mut out = String::from("trial_id,status,num_layers,layer_sizes,lookback,lr,batch,objective_mape");
        for r in &self.config.prune.rungs {
            let _ = write!(out, ",rung_{r}");
        }
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        for t in &self.trials {
            let p = &t.params;
            let _ = write!(
                out,
                "{},{},{},{},{},{:e},{},{}",
                t.id,
                t.status.name(),
                p.num_layers(),
                p.layers_label(),
                p.lookback,
                p.learning_rate,
                p.batch_size,
                opt(t.objective)
            );
            for l in &t.rung_losses {
                let _ = write!(out, ",{}", opt(*l));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.log_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Runs `config.n_trials` trials and returns the best complete one.
///
/// The evaluator receives the configuration, a per-trial seed and a rung
/// reporter, and returns the validation MAPE. Returning after the reporter
/// asked to stop marks the trial pruned; an error marks it failed.
pub fn run_study<F>(evaluator: F, space: &SearchSpace, config: StudyConfig) -> Result<(Trial, StudyState)>
where
    F: Fn(&Hyperparameters, u64, &mut RungReporter) -> Result<f64> + Sync,
{
    space.validate()?;
    let mut state = StudyState::new(config)?;
    let n = state.config.n_trials;
    let width = state.config.parallelism;
    while state.trials.len() < n {
        let first = state.trials.len();
        let batch: Vec<(usize, Hyperparameters, u64)> = (first..n.min(first + width))
            .map(|id| (id, state.suggest(space), derive_seed(state.config.seed, "trial", id as u64)))
            .collect();
        let peers = state.rung_peers();
        let prune = state.config.prune.clone();
        let run = |(id, params, seed): &(usize, Hyperparameters, u64)| {
            let mut reporter = RungReporter::new(prune.clone(), peers.clone());
            let result = evaluator(params, *seed, &mut reporter);
            let (status, objective, message) = match result {
                Ok(_) if reporter.pruned() => (TrialStatus::Pruned, None, None),
                Ok(y) if y.is_finite() => (TrialStatus::Complete, Some(y), None),
                Ok(y) => (TrialStatus::Failed, None, Some(format!("objective {y}"))),
                Err(e) => (TrialStatus::Failed, None, Some(e.to_string())),
            };
            Trial {
                id: *id,
                params: params.clone(),
                seed: *seed,
                status,
                objective,
                rung_losses: reporter.losses,
                message,
            }
        };
        let done: Vec<Trial> = if width == 1 {
            batch.iter().map(run).collect()
        } else {
            batch.par_iter().map(run).collect()
        };
        for t in done {
            log::info!(
                "trial {} {} layers={} lookback={} lr={:e} batch={} objective={:?}{}",
                t.id,
                t.status.name(),
                t.params.layers_label(),
                t.params.lookback,
                t.params.learning_rate,
                t.params.batch_size,
                t.objective,
                t.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default()
            );
            state.trials.push(t);
        }
    }
    match state.best().cloned() {
        Some(best) => Ok((best, state)),
        None => Err(Error::StudyFailed {
            trials: state.trials.len(),
            log: state.log_csv(),
        }),
    }
}
