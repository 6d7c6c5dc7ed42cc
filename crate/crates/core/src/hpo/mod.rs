//! Hyperparameter search: TPE suggestions with successive-halving pruning.

pub mod prune;
pub mod space;
pub mod study;
pub mod tpe;

pub use prune::{should_prune, PruneConfig};
pub use space::SearchSpace;
pub use study::{run_study, RungReporter, StudyConfig, StudyState, Trial, TrialStatus};
pub use tpe::{tpe_suggest, TpeConfig};
