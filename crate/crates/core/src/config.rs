//! Pipeline configuration, read from TOML.
//!
//! A config file only needs the keys it changes: it is merged over the
//! defaults (or over the desk-scale preset) before being deserialized.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::hpo::{SearchSpace, StudyConfig};
use crate::nn::TrainConfig;
use crate::series::SplitSpec;
use crate::synth::SyntheticSpec;
use crate::wrangle::outliers::DEFAULT_MULTIPLIER;
use crate::wrangle::ImputationParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Number of clusters cut from the dendrogram.
    pub k: usize,
    pub ensemble_size: usize,
    /// Worker threads for per-country experiments.
    pub workers: usize,
    pub outlier_multiplier: f64,
    pub imputation: ImputationParams,
    pub experiment: ExperimentConfig,
    /// Dataset manifest (`code,display_name,timezone_id,csv_path`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    /// Required with a manifest; synthetic data brings its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("loadtl-out"),
            master_seed: 42,
            k: 4,
            ensemble_size: 20,
            workers: 1,
            outlier_multiplier: DEFAULT_MULTIPLIER,
            imputation: ImputationParams::default(),
            experiment: ExperimentConfig::default(),
            manifest: None,
            synthetic: None,
            splits: None,
        }
    }
}

impl PipelineConfig {
    /// Small synthetic run: 6 countries in 2 families, 10 trials, 5 members.
    pub fn desk_scale() -> Self {
        PipelineConfig {
            k: 2,
            ensemble_size: 5,
            experiment: ExperimentConfig {
                space: SearchSpace::desk(),
                study: StudyConfig {
                    n_trials: 10,
                    ..StudyConfig::default()
                },
                train: TrainConfig {
                    max_epochs: 100,
                    patience: 10,
                    ..TrainConfig::default()
                },
                ..ExperimentConfig::default()
            },
            synthetic: Some(SyntheticSpec::default()),
            ..PipelineConfig::default()
        }
    }

    /// Defaults (or the desk preset) overlaid with an optional file.
    /// Relative paths in the file resolve against its directory.
    pub fn load(path: Option<&Path>, desk_scale: bool) -> Result<Self> {
        let base = if desk_scale {
            PipelineConfig::desk_scale()
        } else {
            PipelineConfig::default()
        };
        let Some(path) = path else {
            base.validate()?;
            return Ok(base);
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_over(&text, base)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if overlay.contains_key("output_dir") && cfg.output_dir.is_relative() {
            cfg.output_dir = dir.join(&cfg.output_dir);
        }
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(dir.join(m));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` merged over `base`, without validating.
    pub fn from_toml_over(text: &str, base: PipelineConfig) -> Result<Self> {
        let overlay: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, overlay, "", 0)?;
        merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.manifest, &self.synthetic) {
            (Some(_), Some(_)) => return bad("set either `manifest` or `synthetic`, not both".into()),
            (None, None) => return bad("no data source: set `manifest` or `synthetic`".into()),
            (Some(m), None) => {
                if !m.is_file() {
                    return bad(format!("manifest {} does not exist", m.display()));
                }
            }
            (None, Some(_)) => {}
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.outlier_multiplier > 0.0) {
            return bad(format!("outlier_multiplier must be > 0, got {}", self.outlier_multiplier));
        }
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.imputation.validate().map_err(cfg_err)?;
        let x = &self.experiment;
        x.space.validate().map_err(cfg_err)?;
        x.train.validate().map_err(cfg_err)?;
        x.study.validate().map_err(cfg_err)?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table, prefix: &str, depth: usize) -> Result<()> {
    for (key, value) in overlay {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path, depth + 1)?,
            (None, _) if depth > 0 => return Err(Error::Config(format!("unknown key `{path}`"))),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_round_trips() {
        let cfg = PipelineConfig::desk_scale();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml_over(&text, PipelineConfig::default()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overlay_changes_only_given_keys() {
        let text = "k = 3\n[experiment.study]\nn_trials = 4\n";
        let cfg = PipelineConfig::from_toml_over(text, PipelineConfig::desk_scale()).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.experiment.study.n_trials, 4);
        assert_eq!(cfg.ensemble_size, 5);
        assert_eq!(cfg.experiment.space, SearchSpace::desk());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(PipelineConfig::from_toml_over("kk = 3", PipelineConfig::default()).is_err());
        assert!(PipelineConfig::from_toml_over("[experiment.train]\nepochs = 3", PipelineConfig::default()).is_err());
    }

    #[test]
    fn validation() {
        assert!(matches!(PipelineConfig::default().validate(), Err(Error::Config(_))));
        let mut c = PipelineConfig::desk_scale();
        c.ensemble_size = 0;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::desk_scale();
        c.manifest = Some("/nonexistent/manifest.csv".into());
        c.synthetic = None;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::desk_scale();
        c.experiment.train.patience = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.csv"), "code,display_name,timezone_id,csv_path\n").unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "manifest = \"m.csv\"\noutput_dir = \"out\"\n").unwrap();
        let cfg = PipelineConfig::load(Some(&p), false).unwrap();
        assert_eq!(cfg.manifest.unwrap(), dir.path().join("m.csv"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }
}
