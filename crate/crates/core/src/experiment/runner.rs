use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mape;
use crate::experiment::data::{training_data_by_lookback, CountryData, Partition, TrainingData};
use crate::experiment::ensemble::{fine_tune_ensemble, train_ensemble, EnsembleModel, MemberRun};
use crate::experiment::plan::{ExperimentPlan, SetupKind};
use crate::experiment::snaive::{snaive_forecast, SEASON};
use crate::hpo::{run_study, RungReporter, SearchSpace, StudyConfig, StudyState};
use crate::nn::mlp::{Activation, Hyperparameters, Mlp};
use crate::nn::persist::save_model;
use crate::nn::train::{train, train_observed, Control, History, TrainConfig};
use crate::nn::window::{target_starts, SampleSet, Stride, WindowSpec};
use crate::seed::derive_seed;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Training and search settings shared by every experiment of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: SearchSpace,
    pub study: StudyConfig,
    pub train: TrainConfig,
    pub activation: Activation,
    pub stride: Stride,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            space: SearchSpace::default(),
            study: StudyConfig::default(),
            train: TrainConfig::default(),
            activation: Activation::Relu,
            stride: Stride::Daily,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRow {
    pub timestamp: NaiveDateTime,
    pub actual: f64,
    pub forecast: f64,
}

/// Wall-clock minutes per pipeline phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub source_minutes: Option<f64>,
    pub target_minutes: Option<f64>,
    pub baseline_minutes: Option<f64>,
}

/// Output of the source stage of a transfer experiment.
#[derive(Debug, Clone)]
pub struct SourceStage {
    pub hyper: Hyperparameters,
    pub model: Mlp,
    pub history: History,
    pub study: Option<StudyState>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub plan: ExperimentPlan,
    pub study: Option<StudyState>,
    pub source: Option<(Mlp, History)>,
    pub members: Vec<MemberRun>,
    pub ensemble: Option<EnsembleModel>,
    pub forecast: Vec<ForecastRow>,
    pub val_mape: Option<f64>,
    pub test_mape: f64,
    pub timing: Timing,
}

impl ExperimentOutcome {
    /// Mean number of training epochs over the ensemble members.
    pub fn mean_member_epochs(&self) -> Option<f64> {
        (!self.members.is_empty()).then(|| {
            self.members.iter().map(|m| m.history.epochs_run() as f64).sum::<f64>() / self.members.len() as f64
        })
    }
}

fn minutes(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() / 60.0
}

fn lookup<'a>(data: &'a BTreeMap<String, CountryData>, code: &str) -> Result<&'a CountryData> {
    data.get(code)
        .ok_or_else(|| Error::Experiment(format!("no prepared data for country {code}")))
}

/// Searches the space on `by_lookback` and returns the best trial's
/// trained model, which has run to its early stop.
fn search(
    by_lookback: &BTreeMap<usize, TrainingData>,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(Hyperparameters, Mlp, History, StudyState)> {
    let kept: Mutex<BTreeMap<u64, (Mlp, History)>> = Mutex::new(BTreeMap::new());
    let evaluator = |h: &Hyperparameters, trial_seed: u64, reporter: &mut RungReporter| -> Result<f64> {
        let data = by_lookback
            .get(&h.lookback)
            .ok_or_else(|| Error::Experiment(format!("no samples for lookback {}", h.lookback)))?;
        let model = Mlp::new(h.clone(), cfg.activation, trial_seed)?;
        let tc = TrainConfig {
            seed: derive_seed(trial_seed, "shuffle", 0),
            ..cfg.train.clone()
        };
        let (best, history) = train_observed(model, &data.train, &data.val, &tc, &mut |r| {
            if reporter.report(r.epoch, r.val_loss) {
                Control::Halt
            } else {
                Control::Continue
            }
        })?;
        let objective = data.model_val_mape(&best)?;
        if !history.halted {
            kept.lock().expect("unpoisoned").insert(trial_seed, (best, history));
        }
        Ok(objective)
    };
    let study_cfg = StudyConfig {
        seed,
        ..cfg.study.clone()
    };
    let (best, state) = run_study(evaluator, &cfg.space, study_cfg)?;
    let (model, history) = kept
        .into_inner()
        .expect("unpoisoned")
        .remove(&best.seed)
        .ok_or_else(|| Error::Experiment("best trial left no model".into()))?;
    Ok((best.params, model, history, state))
}

/// Fits the source model on the pooled windows of `plan.sources`.
pub fn pretrain_source(
    plan: &ExperimentPlan,
    data: &BTreeMap<String, CountryData>,
    cfg: &ExperimentConfig,
) -> Result<SourceStage> {
    if plan.sources.is_empty() {
        return Err(Error::Experiment(format!("{} for {} has no source countries", plan.setup.label(), plan.target)));
    }
    let sources: Vec<&CountryData> = plan.sources.iter().map(|c| lookup(data, c)).collect::<Result<_>>()?;
    let horizon = cfg.space.horizon;
    let stage = match &plan.hyperparameters {
        Some(h) => {
            let pooled = TrainingData::pooled(&sources, h.lookback, horizon, cfg.stride)?;
            check_batch(&pooled, h)?;
            let seed = derive_seed(plan.master_seed, &plan.seed_role("source"), 0);
            let model = Mlp::new(h.clone(), cfg.activation, seed)?;
            let tc = TrainConfig {
                seed: derive_seed(seed, "shuffle", 0),
                ..cfg.train.clone()
            };
            let (model, history) = train(model, &pooled.train, &pooled.val, &tc)?;
            SourceStage {
                hyper: h.clone(),
                model,
                history,
                study: None,
            }
        }
        None => {
            let by_lookback = training_data_by_lookback(&sources, &cfg.space.lookbacks, horizon, cfg.stride)?;
            let seed = derive_seed(plan.master_seed, &plan.seed_role("study"), 0);
            let (hyper, model, history, study) = search(&by_lookback, cfg, seed)?;
            check_batch(&by_lookback[&hyper.lookback], &hyper)?;
            SourceStage {
                hyper,
                model,
                history,
                study: Some(study),
            }
        }
    };
    Ok(stage)
}

/// Runs only the hyperparameter search of an experiment: on the target for
/// the baseline, on the pooled sources for transfer setups.
pub fn tune_experiment(
    plan: &ExperimentPlan,
    data: &BTreeMap<String, CountryData>,
    cfg: &ExperimentConfig,
) -> Result<(Hyperparameters, StudyState)> {
    let pool: Vec<&CountryData> = match plan.setup {
        SetupKind::SNaive168 => {
            return Err(Error::Config("the seasonal naive setup has nothing to tune".into()));
        }
        SetupKind::Baseline => vec![lookup(data, &plan.target)?],
        SetupKind::Abo | SetupKind::Cbo => plan.sources.iter().map(|c| lookup(data, c)).collect::<Result<_>>()?,
    };
    if pool.is_empty() {
        return Err(Error::Experiment(format!("{} for {} has no source countries", plan.setup.label(), plan.target)));
    }
    let by_lookback = training_data_by_lookback(&pool, &cfg.space.lookbacks, cfg.space.horizon, cfg.stride)?;
    let seed = derive_seed(plan.master_seed, &plan.seed_role("study"), 0);
    let (hyper, _, _, state) = search(&by_lookback, cfg, seed)?;
    Ok((hyper, state))
}

fn check_batch(data: &TrainingData, h: &Hyperparameters) -> Result<()> {
    if data.train.len() < h.batch_size {
        return Err(Error::Experiment(format!(
            "source pool has {} samples, fewer than one batch of {}",
            data.train.len(),
            h.batch_size
        )));
    }
    Ok(())
}

fn forecast_rows(set: &SampleSet, actual: &ndarray::Array2<f64>, forecast: &ndarray::Array2<f64>) -> Vec<ForecastRow> {
    let mut rows = Vec::with_capacity(actual.len());
    for (i, origin) in set.origins.iter().enumerate() {
        for h in 0..actual.ncols() {
            rows.push(ForecastRow {
                timestamp: *origin + Duration::hours(h as i64),
                actual: actual[[i, h]],
                forecast: forecast[[i, h]],
            });
        }
    }
    rows
}

fn rows_mape(rows: &[ForecastRow]) -> Result<f64> {
    let a: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    let f: Vec<f64> = rows.iter().map(|r| r.forecast).collect();
    mape(&a, &f)
}

fn evaluate_ensemble(
    target: &CountryData,
    ensemble: &EnsembleModel,
    horizon: usize,
    stride: Stride,
) -> Result<(Vec<ForecastRow>, f64, f64)> {
    let lookback = ensemble.lookback();
    let val = target.samples(lookback, horizon, stride, Partition::Val)?;
    let test = target.samples(lookback, horizon, stride, Partition::Test)?;
    let unscale = |set: &SampleSet| set.targets.mapv(|z| target.scaler.invert(z));
    let val_rows = forecast_rows(&val, &unscale(&val), &ensemble.predict_set(&val)?);
    let test_rows = forecast_rows(&test, &unscale(&test), &ensemble.predict_set(&test)?);
    let val_mape = rows_mape(&val_rows)?;
    let test_mape = rows_mape(&test_rows)?;
    Ok((test_rows, val_mape, test_mape))
}

fn run_snaive(plan: &ExperimentPlan, target: &CountryData, horizon: usize) -> Result<ExperimentOutcome> {
    let spec = WindowSpec::daily(SEASON, horizon);
    let starts = target_starts(&target.series, &spec, target.splits.val_end, target.splits.test_end);
    if starts.is_empty() {
        return Err(Error::Experiment(format!("{}: no test days with a week of history", plan.target)));
    }
    let mut forecast = Vec::with_capacity(starts.len() * horizon);
    for t in starts {
        let f = snaive_forecast(&target.series, t, horizon)?;
        for (h, v) in f.into_iter().enumerate() {
            forecast.push(ForecastRow {
                timestamp: target.series.timestamp(t + h),
                actual: target.series.values()[t + h],
                forecast: v,
            });
        }
    }
    Ok(ExperimentOutcome {
        plan: plan.clone(),
        study: None,
        source: None,
        members: Vec::new(),
        ensemble: None,
        test_mape: rows_mape(&forecast)?,
        forecast,
        val_mape: None,
        timing: Timing::default(),
    })
}

/// Runs one experiment end to end on prepared country data.
pub fn run_experiment(
    plan: &ExperimentPlan,
    data: &BTreeMap<String, CountryData>,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let target = lookup(data, &plan.target)?;
    let horizon = cfg.space.horizon;
    let mut plan = plan.clone();
    log::info!("experiment {} for {}", plan.setup.label(), plan.target);
    match plan.setup {
        SetupKind::SNaive168 => run_snaive(&plan, target, horizon),
        SetupKind::Baseline => {
            let clock = Instant::now();
            let mut study = None;
            let hyper = match plan.hyperparameters.clone() {
                Some(h) => h,
                None => {
                    let by_lookback = training_data_by_lookback(&[target], &cfg.space.lookbacks, horizon, cfg.stride)?;
                    let seed = derive_seed(plan.master_seed, &plan.seed_role("study"), 0);
                    let (h, _, _, state) = search(&by_lookback, cfg, seed)?;
                    study = Some(state);
                    h
                }
            };
            plan.hyperparameters = Some(hyper.clone());
            let own = TrainingData::pooled(&[target], hyper.lookback, horizon, cfg.stride)?;
            let member_seed = derive_seed(plan.master_seed, &plan.seed_role("members"), 0);
            let members = train_ensemble(
                &hyper,
                cfg.activation,
                &own.train,
                &own.val,
                &cfg.train,
                plan.ensemble_size,
                member_seed,
            )?;
            let ensemble = EnsembleModel::new(members.iter().map(|m| m.model.clone()).collect(), target.scaler)?;
            let timing = Timing {
                baseline_minutes: Some(minutes(clock)),
                ..Timing::default()
            };
            let (forecast, val_mape, test_mape) = evaluate_ensemble(target, &ensemble, horizon, cfg.stride)?;
            Ok(ExperimentOutcome {
                plan,
                study,
                source: None,
                members,
                ensemble: Some(ensemble),
                forecast,
                val_mape: Some(val_mape),
                test_mape,
                timing,
            })
        }
        SetupKind::Abo | SetupKind::Cbo => {
            let clock = Instant::now();
            let stage = pretrain_source(&plan, data, cfg)?;
            let source_minutes = minutes(clock);
            plan.hyperparameters = Some(stage.hyper.clone());

            let clock = Instant::now();
            let own = TrainingData::pooled(&[target], stage.hyper.lookback, horizon, cfg.stride)?;
            let tune_seed = derive_seed(plan.master_seed, &plan.seed_role("finetune"), 0);
            let members = fine_tune_ensemble(&stage.model, &own.train, &own.val, &cfg.train, plan.ensemble_size, tune_seed)?;
            let ensemble = EnsembleModel::new(members.iter().map(|m| m.model.clone()).collect(), target.scaler)?;
            let timing = Timing {
                source_minutes: Some(source_minutes),
                target_minutes: Some(minutes(clock)),
                baseline_minutes: None,
            };
            let (forecast, val_mape, test_mape) = evaluate_ensemble(target, &ensemble, horizon, cfg.stride)?;
            Ok(ExperimentOutcome {
                plan,
                study: stage.study,
                source: Some((stage.model, stage.history)),
                members,
                ensemble: Some(ensemble),
                forecast,
                val_mape: Some(val_mape),
                test_mape,
                timing,
            })
        }
    }
}

pub fn forecast_csv(rows: &[ForecastRow]) -> String {
    let mut out = String::from("timestamp,actual_mw,forecast_mw\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.timestamp.format(TIMESTAMP_FORMAT), r.actual, r.forecast);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Persists models, forecasts, logs and metrics of one experiment.
pub fn write_outcome(dir: &Path, outcome: &ExperimentOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let plan = &outcome.plan;
    let plan_text = toml::to_string(plan).map_err(|e| Error::Config(e.to_string()))?;
    write(&dir.join("plan.toml"), &plan_text)?;
    write(&dir.join("forecast.csv"), &forecast_csv(&outcome.forecast))?;
    write(
        &dir.join("metrics.csv"),
        &format!(
            "country,setup,val_mape,test_mape\n{},{},{},{}\n",
            plan.target,
            plan.setup.id(),
            opt(outcome.val_mape),
            outcome.test_mape
        ),
    )?;
    let t = &outcome.timing;
    write(
        &dir.join("timing.csv"),
        &format!(
            "phase,minutes\nsource,{}\ntarget,{}\nbaseline,{}\n",
            opt(t.source_minutes),
            opt(t.target_minutes),
            opt(t.baseline_minutes)
        ),
    )?;
    if let Some(study) = &outcome.study {
        study.write_log(&dir.join("study_log.csv"))?;
    }
    if let Some((model, _)) = &outcome.source {
        save_model(&dir.join("source_model.txt"), model)?;
    }
    if !outcome.members.is_empty() {
        let members_dir = dir.join("members");
        std::fs::create_dir_all(&members_dir).map_err(|e| Error::io(&members_dir, e))?;
        let mut epochs = String::from("member,seed,epochs_run,best_epoch,best_val_loss,retried\n");
        for (i, m) in outcome.members.iter().enumerate() {
            save_model(&members_dir.join(format!("member_{i:02}.txt")), &m.model)?;
            let _ = writeln!(
                epochs,
                "{i},{},{},{},{},{}",
                m.seed,
                m.history.epochs_run(),
                m.history.best_epoch,
                m.history.best_val_loss,
                m.retried
            );
        }
        write(&dir.join("epochs.csv"), &epochs)?;
    }
    Ok(())
}

/// Reads `(country, setup, test_mape)` back from a metrics file.
pub fn read_metrics(path: &Path) -> Result<(String, SetupKind, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let line = text
        .lines()
        .nth(1)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: 2,
            message: "missing metrics row".into(),
        })?;
    let fields: Vec<&str> = line.split(',').collect();
    let perr = |m: &str| Error::Parse {
        path: path.to_path_buf(),
        row: 2,
        message: m.to_string(),
    };
    if fields.len() != 4 {
        return Err(perr("expected 4 fields"));
    }
    let setup: SetupKind = fields[1].parse().map_err(|_| perr("bad setup"))?;
    let test: f64 = fields[3].parse().map_err(|_| perr("bad test MAPE"))?;
    Ok((fields[0].to_string(), setup, test))
}

/// Reads the mean member epoch count from an `epochs.csv`.
pub fn read_mean_epochs(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let counts: Vec<f64> = text
        .lines()
        .skip(1)
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .nth(2)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    message: "bad epochs_run".into(),
                })
        })
        .collect::<Result<_>>()?;
    if counts.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: "no members".into(),
        });
    }
    Ok(counts.iter().sum::<f64>() / counts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::{PruneConfig, TpeConfig};
    use crate::series::{LoadSeries, SplitSpec, TimeBase};
    use crate::synth::{synthesize_dataset, SyntheticSpec};

    fn small_data() -> BTreeMap<String, CountryData> {
        let spec = SyntheticSpec {
            countries_per_family: 2,
            ..SyntheticSpec::default()
        };
        let syn = synthesize_dataset(&spec).unwrap();
        syn.dataset
            .series
            .iter()
            .map(|(c, s)| (c.clone(), CountryData::new(s.clone(), syn.dataset.splits).unwrap()))
            .collect()
    }

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            space: SearchSpace {
                num_layers: vec![1],
                layer_sizes: vec![8],
                lookbacks: vec![168],
                batch_sizes: vec![32],
                lr_min: 1e-3,
                lr_max: 3e-3,
                horizon: 24,
            },
            study: StudyConfig {
                n_trials: 2,
                seed: 0,
                parallelism: 1,
                tpe: TpeConfig::default(),
                prune: PruneConfig::default(),
            },
            train: TrainConfig {
                max_epochs: 12,
                patience: 4,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    fn plan(setup: SetupKind, target: &str, data: &BTreeMap<String, CountryData>) -> ExperimentPlan {
        let codes: Vec<String> = data.keys().cloned().collect();
        let splits = data[target].splits;
        ExperimentPlan::new(setup, target, &codes, None, splits, 2, 5).unwrap()
    }

    #[test]
    fn snaive_outcome() {
        let data = small_data();
        let out = run_experiment(&plan(SetupKind::SNaive168, "AA", &data), &data, &tiny_cfg()).unwrap();
        assert_eq!(out.forecast.len(), 365 * 24);
        assert!(out.members.is_empty() && out.ensemble.is_none());
        assert!(out.test_mape > 0.0 && out.test_mape < 10.0);
    }

    #[test]
    fn baseline_and_transfer_run_and_write() {
        let data = small_data();
        let cfg = tiny_cfg();
        let base = run_experiment(&plan(SetupKind::Baseline, "AA", &data), &data, &cfg).unwrap();
        assert_eq!(base.members.len(), 2);
        assert_eq!(base.forecast.len(), 365 * 24);
        assert!(base.timing.baseline_minutes.is_some());

        let abo = run_experiment(&plan(SetupKind::Abo, "AA", &data), &data, &cfg).unwrap();
        let (source, _) = abo.source.as_ref().unwrap();
        assert_eq!(source.input_dim(), 168);
        assert!(abo.timing.source_minutes.is_some() && abo.timing.target_minutes.is_some());

        let dir = tempfile::tempdir().unwrap();
        write_outcome(dir.path(), &abo).unwrap();
        for f in ["plan.toml", "forecast.csv", "metrics.csv", "timing.csv", "study_log.csv", "source_model.txt", "epochs.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(dir.path().join("members/member_01.txt").exists());
        let (c, s, m) = read_metrics(&dir.path().join("metrics.csv")).unwrap();
        assert_eq!((c.as_str(), s), ("AA", SetupKind::Abo));
        assert_eq!(m, abo.test_mape);
        let e = read_mean_epochs(&dir.path().join("epochs.csv")).unwrap();
        assert_eq!(Some(e), abo.mean_member_epochs());
    }

    #[test]
    fn fixed_hyperparameters_skip_search() {
        let data = small_data();
        let mut p = plan(SetupKind::Abo, "AA", &data);
        p.setup = SetupKind::Cbo;
        p.sources = vec!["AB".into()];
        p.hyperparameters = Some(Hyperparameters {
            layer_sizes: vec![8],
            lookback: 168,
            horizon: 24,
            learning_rate: 1e-3,
            batch_size: 32,
        });
        let out = run_experiment(&p, &data, &tiny_cfg()).unwrap();
        assert!(out.study.is_none());
        assert_eq!(out.plan.hyperparameters, p.hyperparameters);
    }

    #[test]
    fn tuning_matches_the_experiment_search() {
        let data = small_data();
        let cfg = tiny_cfg();
        let p = plan(SetupKind::Baseline, "AB", &data);
        let (h, state) = tune_experiment(&p, &data, &cfg).unwrap();
        let out = run_experiment(&p, &data, &cfg).unwrap();
        assert_eq!(out.plan.hyperparameters, Some(h));
        assert_eq!(out.study.unwrap().log_csv(), state.log_csv());
        assert!(tune_experiment(&plan(SetupKind::SNaive168, "AB", &data), &data, &cfg).is_err());
    }

    #[test]
    fn source_pool_smaller_than_batch() {
        let start = crate::series::year_start(2019).unwrap();
        let v: Vec<f64> = (0..24 * (365 + 366 + 365)).map(|i| 100.0 + (i % 24) as f64).collect();
        let s = LoadSeries::from_values("ZZ", "UTC", TimeBase::Local, start, v).unwrap();
        let splits = SplitSpec::from_years(2020, 2021, 2022).unwrap();
        let mut data = BTreeMap::new();
        data.insert("ZZ".to_string(), CountryData::new(s.clone(), splits).unwrap());
        let mut t = s.clone();
        t.country_code = "ZY".into();
        data.insert("ZY".to_string(), CountryData::new(t, splits).unwrap());
        let mut p = plan(SetupKind::Abo, "ZY", &data);
        p.hyperparameters = Some(Hyperparameters {
            layer_sizes: vec![4],
            lookback: 168,
            horizon: 24,
            learning_rate: 1e-3,
            batch_size: 4096,
        });
        let err = pretrain_source(&p, &data, &tiny_cfg()).unwrap_err();
        assert!(err.to_string().contains("fewer than one batch"), "{err}");
    }
}
