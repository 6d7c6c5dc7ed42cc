//! Baseline, transfer and seasonal-naive experiments.

pub mod data;
pub mod ensemble;
pub mod plan;
pub mod runner;
pub mod snaive;

pub use data::{training_data_by_lookback, CountryData, Partition, TrainingData};
pub use ensemble::{ensemble_predict, fine_tune, fine_tune_ensemble, train_ensemble, warm_start, EnsembleModel, MemberRun};
pub use plan::{build_source_set, ExperimentPlan, SetupKind};
pub use runner::{
    forecast_csv, pretrain_source, read_mean_epochs, read_metrics, run_experiment, tune_experiment, write_outcome, ExperimentConfig,
    ExperimentOutcome, ForecastRow, SourceStage, Timing,
};
pub use snaive::{snaive_forecast, SEASON};
