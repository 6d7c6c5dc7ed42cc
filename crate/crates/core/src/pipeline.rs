//! Stage orchestration. Every stage reads and writes files below the
//! configured output directory:
//!
//! ```text
//! resolved_config.toml   timing_log.csv
//! raw/                   synthetic input files and their manifest
//! cleaned/               curated series, manifest.csv, splits.toml
//! logs/                  per-country curation logs, ingest_report.csv
//! profiles/              daily/weekly/yearly means, vectors.csv
//! clusters/              dendrogram.csv, assignment.csv
//! tuning/<setup>/<cc>/   study_log.csv, best.toml
//! experiments/<setup>/<cc>/
//! report/
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cluster::{cut_clusters, ward_dendrogram, write_dendrogram_csv, ClusterAssignment, Dendrogram};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::eval::{build_report, EvaluationReport};
use crate::experiment::{
    read_mean_epochs, read_metrics, run_experiment, tune_experiment, write_outcome, CountryData, ExperimentPlan,
    SetupKind,
};
use crate::io::{parse_load_csv, read_local_csv, read_manifest, write_manifest, write_series_csv, ManifestEntry};
use crate::nn::Hyperparameters;
use crate::profile::{build_profile_vector, compute_profiles, LoadProfiles, ProfileVector};
use crate::series::{LoadSeries, SplitSpec};
use crate::synth::synthesize_dataset;
use crate::wrangle::{curate, write_log_csv};

/// Per-country counts from the ingest stage.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRow {
    pub country: String,
    pub hours: usize,
    pub duplicates: usize,
    pub outliers: usize,
    pub fall_backs: usize,
    pub skipped_hours: usize,
    pub imputed: usize,
}

pub struct Pipeline {
    pub config: PipelineConfig,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

fn joined(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { config })
    }

    pub fn out(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn experiment_dir(&self, setup: SetupKind, country: &str) -> PathBuf {
        self.out().join("experiments").join(setup.id()).join(country)
    }

    pub fn tuning_dir(&self, setup: SetupKind, country: &str) -> PathBuf {
        self.out().join("tuning").join(setup.id()).join(country)
    }

    /// Writes the resolved config and runs `f`, logging its duration.
    fn stage<T>(&self, name: &str, scope: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        mkdir(self.out())?;
        write(&self.out().join("resolved_config.toml"), &self.config.to_toml()?)?;
        let clock = Instant::now();
        log::info!("stage {name} {scope}");
        let value = f()?;
        let seconds = clock.elapsed().as_secs_f64();
        let path = self.out().join("timing_log.csv");
        let fresh = !path.exists();
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let io = |e| Error::io(&path, e);
        if fresh {
            writeln!(file, "stage,scope,seconds").map_err(io)?;
        }
        writeln!(file, "{name},{scope},{seconds:.3}").map_err(io)?;
        log::info!("stage {name} done in {seconds:.1} s");
        Ok(value)
    }

    fn input_entries(&self) -> Result<(Vec<ManifestEntry>, SplitSpec)> {
        if let Some(spec) = &self.config.synthetic {
            let syn = synthesize_dataset(spec)?;
            let raw = self.out().join("raw");
            mkdir(&raw)?;
            let mut entries = Vec::new();
            let mut families = String::from("country,family\n");
            for (code, series) in &syn.dataset.series {
                let path = raw.join(format!("{code}.csv"));
                write_series_csv(&path, series)?;
                entries.push(ManifestEntry {
                    meta: syn.dataset.countries[code].clone(),
                    csv_path: path,
                });
                let _ = writeln!(families, "{code},{}", syn.family_of[code] + 1);
            }
            write_manifest(&raw.join("manifest.csv"), &entries)?;
            write(&raw.join("families.csv"), &families)?;
            let splits = self.config.splits.unwrap_or(syn.dataset.splits);
            return Ok((entries, splits));
        }
        let manifest = self
            .config
            .manifest
            .as_ref()
            .ok_or_else(|| Error::Config("no data source".into()))?;
        let splits = match self.config.splits {
            Some(s) => s,
            None => SplitSpec::from_years(2020, 2021, 2022)?,
        };
        Ok((read_manifest(manifest)?, splits))
    }

    /// Parses and curates every input file.
    pub fn ingest(&self) -> Result<Vec<IngestRow>> {
        self.stage("ingest", "all", || {
            let (entries, splits) = self.input_entries()?;
            if entries.is_empty() {
                return Err(Error::InvalidInput("the manifest lists no countries".into()));
            }
            let cleaned = self.out().join("cleaned");
            let logs = self.out().join("logs");
            mkdir(&cleaned)?;
            mkdir(&logs)?;
            let cfg = &self.config;
            let curated = entries
                .par_iter()
                .map(|e| {
                    let parsed = parse_load_csv(&e.csv_path, &e.meta)?;
                    curate(&parsed, cfg.outlier_multiplier, &cfg.imputation)
                })
                .collect::<Vec<_>>();
            let mut rows = Vec::new();
            let mut out_entries = Vec::new();
            let mut report =
                String::from("country,hours,duplicates_dropped,outliers_removed,dst_averaged,dst_skipped,imputed\n");
            for (e, c) in entries.iter().zip(curated) {
                let c = c?;
                let code = &e.meta.code;
                let path = cleaned.join(format!("{code}.csv"));
                write_series_csv(&path, &c.series)?;
                write_log_csv(&logs.join(format!("{code}_curation.csv")), &c.log)?;
                out_entries.push(ManifestEntry {
                    meta: e.meta.clone(),
                    csv_path: PathBuf::from(format!("{code}.csv")),
                });
                let row = IngestRow {
                    country: code.clone(),
                    hours: c.series.len(),
                    duplicates: c.duplicates_dropped,
                    outliers: c.outliers.removed.len(),
                    fall_backs: c.fall_backs,
                    skipped_hours: c.skipped_hours,
                    imputed: c.imputed,
                };
                log::info!(
                    "{code}: {} duplicates, {} outliers, {} imputed",
                    row.duplicates,
                    row.outliers,
                    row.imputed
                );
                let _ = writeln!(
                    report,
                    "{},{},{},{},{},{},{}",
                    row.country, row.hours, row.duplicates, row.outliers, row.fall_backs, row.skipped_hours, row.imputed
                );
                rows.push(row);
            }
            write_manifest(&cleaned.join("manifest.csv"), &out_entries)?;
            write(&cleaned.join("splits.toml"), &toml::to_string(&splits).map_err(|e| Error::Config(e.to_string()))?)?;
            write(&logs.join("ingest_report.csv"), &report)?;
            let outliers: usize = rows.iter().map(|r| r.outliers).sum();
            let imputed: usize = rows.iter().map(|r| r.imputed).sum();
            log::info!("ingest total: {outliers} outliers removed, {imputed} values imputed");
            Ok(rows)
        })
    }

    /// Curated series by country code, plus the shared split.
    pub fn load_cleaned(&self) -> Result<(BTreeMap<String, LoadSeries>, SplitSpec)> {
        let dir = self.out().join("cleaned");
        let manifest = require(dir.join("manifest.csv"))?;
        let splits_path = require(dir.join("splits.toml"))?;
        let text = std::fs::read_to_string(&splits_path).map_err(|e| Error::io(&splits_path, e))?;
        let splits: SplitSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: splits_path.clone(),
            row: 0,
            message: e.to_string(),
        })?;
        let mut out = BTreeMap::new();
        for e in read_manifest(&manifest)? {
            let path = require(e.csv_path.clone())?;
            out.insert(e.meta.code.clone(), read_local_csv(&path, &e.meta)?);
        }
        Ok((out, splits))
    }

    /// Profile curves and normalized vectors of every cleaned country.
    pub fn profile(&self) -> Result<Vec<ProfileVector>> {
        self.stage("profile", "all", || {
            let (series, _) = self.load_cleaned()?;
            let dir = self.out().join("profiles");
            mkdir(&dir)?;
            let mut profiles: Vec<(String, LoadProfiles)> = Vec::new();
            for (code, s) in &series {
                profiles.push((code.clone(), compute_profiles(s)?));
            }
            let table = |header: String, pick: &dyn Fn(&LoadProfiles) -> &Vec<f64>| {
                let mut t = header;
                for (code, p) in &profiles {
                    let _ = writeln!(t, "{code},{}", joined(pick(p)));
                }
                t
            };
            let cols = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",");
            write(&dir.join("daily.csv"), &table(format!("country,{}\n", cols("h", 24)), &|p| &p.daily))?;
            write(
                &dir.join("weekly.csv"),
                &table("country,mon,tue,wed,thu,fri,sat,sun\n".into(), &|p| &p.weekly),
            )?;
            write(
                &dir.join("yearly.csv"),
                &table(
                    "country,jan,feb,mar,apr,may,jun,jul,aug,sep,oct,nov,dec\n".into(),
                    &|p| &p.yearly,
                ),
            )?;
            let vectors: Vec<ProfileVector> =
                profiles.iter().map(|(code, p)| build_profile_vector(code, p)).collect();
            let mut text = format!("country,{}\n", cols("c", crate::profile::VECTOR_LEN));
            for v in &vectors {
                let _ = writeln!(text, "{},{}", v.country_code, joined(&v.components));
            }
            write(&dir.join("vectors.csv"), &text)?;
            Ok(vectors)
        })
    }

    fn read_vectors(&self) -> Result<Vec<ProfileVector>> {
        let path = require(self.out().join("profiles").join("vectors.csv"))?;
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        text.lines()
            .enumerate()
            .skip(1)
            .map(|(k, line)| {
                let mut fields = line.split(',');
                let code = fields.next().unwrap_or_default().to_string();
                let components = fields
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse {
                        path: path.clone(),
                        row: k + 1,
                        message: e.to_string(),
                    })?;
                Ok(ProfileVector {
                    country_code: code,
                    components,
                })
            })
            .collect()
    }

    /// Ward dendrogram of the profile vectors, cut into `k` clusters.
    pub fn cluster(&self) -> Result<(Dendrogram, ClusterAssignment)> {
        self.stage("cluster", "all", || {
            let vectors = self.read_vectors()?;
            let dendrogram = ward_dendrogram(&vectors)?;
            let k = self.config.k.min(vectors.len());
            if k != self.config.k {
                log::warn!("k = {} exceeds the {} countries; cutting at {k}", self.config.k, vectors.len());
            }
            let assignment = cut_clusters(&dendrogram, k)?;
            let dir = self.out().join("clusters");
            mkdir(&dir)?;
            write_dendrogram_csv(&dir.join("dendrogram.csv"), &dendrogram)?;
            assignment.write_csv(&dir.join("assignment.csv"))?;
            Ok((dendrogram, assignment))
        })
    }

    pub fn read_assignment(&self) -> Result<ClusterAssignment> {
        ClusterAssignment::read_csv(&require(self.out().join("clusters").join("assignment.csv"))?)
    }

    fn prepared(&self) -> Result<(BTreeMap<String, CountryData>, SplitSpec)> {
        let (series, splits) = self.load_cleaned()?;
        let data = series
            .into_iter()
            .map(|(code, s)| Ok((code, CountryData::new(s, splits)?)))
            .collect::<Result<_>>()?;
        Ok((data, splits))
    }

    fn plan(
        &self,
        setup: SetupKind,
        target: &str,
        codes: &[String],
        splits: SplitSpec,
    ) -> Result<ExperimentPlan> {
        let clusters = match setup {
            SetupKind::Cbo => Some(self.read_assignment()?),
            _ => None,
        };
        ExperimentPlan::new(
            setup,
            target,
            codes,
            clusters.as_ref(),
            splits,
            self.config.ensemble_size,
            self.config.master_seed,
        )
    }

    fn resolve_targets(&self, codes: &[String], targets: Option<&[String]>) -> Result<Vec<String>> {
        match targets {
            None => Ok(codes.to_vec()),
            Some(ts) => {
                for t in ts {
                    if !codes.contains(t) {
                        return Err(Error::InvalidInput(format!("unknown target country {t}")));
                    }
                }
                Ok(ts.to_vec())
            }
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Runs the search of a setup for the given targets and stores the
    /// chosen hyperparameters, which later experiment runs reuse.
    pub fn tune(&self, setup: SetupKind, targets: Option<&[String]>) -> Result<BTreeMap<String, Hyperparameters>> {
        self.stage("tune", setup.id(), || {
            let (data, splits) = self.prepared()?;
            let codes: Vec<String> = data.keys().cloned().collect();
            let targets = self.resolve_targets(&codes, targets)?;
            let jobs = targets
                .iter()
                .map(|t| self.plan(setup, t, &codes, splits))
                .collect::<Result<Vec<_>>>()?;
            let results = self.pool()?.install(|| {
                jobs.par_iter()
                    .map(|plan| {
                        let (hyper, study) = tune_experiment(plan, &data, &self.config.experiment)?;
                        let dir = self.tuning_dir(setup, &plan.target);
                        mkdir(&dir)?;
                        study.write_log(&dir.join("study_log.csv"))?;
                        let text = toml::to_string(&hyper).map_err(|e| Error::Config(e.to_string()))?;
                        write(&dir.join("best.toml"), &text)?;
                        Ok((plan.target.clone(), hyper))
                    })
                    .collect::<Vec<Result<_>>>()
            });
            results.into_iter().collect()
        })
    }

    fn tuned(&self, setup: SetupKind, target: &str) -> Result<Option<Hyperparameters>> {
        let path = self.tuning_dir(setup, target).join("best.toml");
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let h: Hyperparameters = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            row: 0,
            message: e.to_string(),
        })?;
        Ok(Some(h))
    }

    /// Runs each setup for each target and writes the experiment
    /// directories. Returns `(country, setup, test MAPE)`.
    pub fn experiment(
        &self,
        setups: &[SetupKind],
        targets: Option<&[String]>,
    ) -> Result<Vec<(String, SetupKind, f64)>> {
        let scope = setups.iter().map(|s| s.id()).collect::<Vec<_>>().join("+");
        self.stage("experiment", &scope, || {
            let (data, splits) = self.prepared()?;
            let codes: Vec<String> = data.keys().cloned().collect();
            let targets = self.resolve_targets(&codes, targets)?;
            let mut jobs = Vec::new();
            for &setup in setups {
                for t in &targets {
                    let mut plan = self.plan(setup, t, &codes, splits)?;
                    if setup != SetupKind::SNaive168 {
                        plan.hyperparameters = self.tuned(setup, t)?;
                    }
                    jobs.push(plan);
                }
            }
            let config_text = self.config.to_toml()?;
            let results = self.pool()?.install(|| {
                jobs.par_iter()
                    .map(|plan| {
                        let outcome = run_experiment(plan, &data, &self.config.experiment)?;
                        let dir = self.experiment_dir(plan.setup, &plan.target);
                        write_outcome(&dir, &outcome)?;
                        write(&dir.join("config.toml"), &config_text)?;
                        log::info!("{} {}: test MAPE {:.4}", plan.setup.label(), plan.target, outcome.test_mape);
                        Ok((plan.target.clone(), plan.setup, outcome.test_mape))
                    })
                    .collect::<Vec<Result<_>>>()
            });
            results.into_iter().collect()
        })
    }

    /// Collects every experiment's metrics into the comparison tables.
    pub fn report(&self) -> Result<EvaluationReport> {
        self.stage("report", "all", || {
            let manifest = require(self.out().join("cleaned").join("manifest.csv"))?;
            let codes: Vec<String> = read_manifest(&manifest)?.into_iter().map(|e| e.meta.code).collect();
            let assignment = self.read_assignment()?;
            let mut mapes = BTreeMap::new();
            for code in &codes {
                for setup in SetupKind::ALL {
                    let path = self.experiment_dir(setup, code).join("metrics.csv");
                    if path.exists() {
                        let (country, s, m) = read_metrics(&path)?;
                        mapes.insert((country, s), m);
                    }
                }
            }
            let report = build_report(&mapes, &assignment)?;
            let dir = self.out().join("report");
            report.write_all(&dir)?;
            write(&dir.join("epochs.csv"), &self.epochs_table(&codes)?)?;
            write(&dir.join("timing.csv"), &self.timing_table(&codes)?)?;
            Ok(report)
        })
    }

    fn epochs_table(&self, codes: &[String]) -> Result<String> {
        let mut text = String::from("country,baseline,abo,cbo\n");
        for code in codes {
            let mut cells = Vec::new();
            for setup in [SetupKind::Baseline, SetupKind::Abo, SetupKind::Cbo] {
                let path = self.experiment_dir(setup, code).join("epochs.csv");
                cells.push(format!("{:.2}", read_mean_epochs(&path)?));
            }
            let _ = writeln!(text, "{code},{}", cells.join(","));
        }
        Ok(text)
    }

    fn timing_table(&self, codes: &[String]) -> Result<String> {
        let mut text = String::from("country,setup,source_minutes,target_minutes,baseline_minutes\n");
        for code in codes {
            for setup in [SetupKind::Baseline, SetupKind::Abo, SetupKind::Cbo] {
                let path = self.experiment_dir(setup, code).join("timing.csv");
                let t = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let cell = |phase: &str| {
                    t.lines()
                        .find_map(|l| l.strip_prefix(&format!("{phase},")))
                        .unwrap_or("")
                        .to_string()
                };
                let _ = writeln!(
                    text,
                    "{code},{},{},{},{}",
                    setup.id(),
                    cell("source"),
                    cell("target"),
                    cell("baseline")
                );
            }
        }
        Ok(text)
    }

    /// Every stage in order, all setups for all countries.
    pub fn run_all(&self) -> Result<EvaluationReport> {
        self.ingest()?;
        self.profile()?;
        self.cluster()?;
        self.experiment(&SetupKind::ALL, None)?;
        self.report()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SyntheticSpec;

    fn small(dir: &Path) -> Pipeline {
        let mut cfg = PipelineConfig::desk_scale();
        cfg.output_dir = dir.to_path_buf();
        cfg.synthetic = Some(SyntheticSpec {
            countries_per_family: 2,
            ..SyntheticSpec::default()
        });
        cfg.ensemble_size = 2;
        cfg.experiment.study.n_trials = 2;
        cfg.experiment.train.max_epochs = 10;
        cfg.experiment.train.patience = 3;
        Pipeline::new(cfg).unwrap()
    }

    #[test]
    fn stages_need_their_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = small(dir.path());
        assert!(matches!(p.profile(), Err(Error::MissingArtifact(_))));
        assert!(matches!(p.cluster(), Err(Error::MissingArtifact(_))));
        p.ingest().unwrap();
        p.profile().unwrap();
        assert!(matches!(p.experiment(&[SetupKind::Cbo], None), Err(Error::MissingArtifact(_))));
        p.cluster().unwrap();
        assert!(matches!(p.report(), Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn clustering_and_snaive_stage() {
        let dir = tempfile::tempdir().unwrap();
        let p = small(dir.path());
        let rows = p.ingest().unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.imputed == 0 && r.duplicates == 0));
        p.profile().unwrap();
        let (_, a) = p.cluster().unwrap();
        assert_eq!(a.members(1), vec!["AA", "AB"]);
        assert_eq!(a.members(2), vec!["BA", "BB"]);
        let res = p.experiment(&[SetupKind::SNaive168], Some(&["BA".to_string()])).unwrap();
        assert_eq!(res.len(), 1);
        let exp = p.experiment_dir(SetupKind::SNaive168, "BA");
        assert!(exp.join("forecast.csv").exists());
        assert!(!exp.join("members").exists() && !exp.join("source_model.txt").exists());
        for f in ["resolved_config.toml", "timing_log.csv", "raw/families.csv", "profiles/daily.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(p.experiment(&[SetupKind::SNaive168], Some(&["QQ".to_string()])).is_err());
    }

    #[test]
    fn tuned_hyperparameters_are_reused() {
        let dir = tempfile::tempdir().unwrap();
        let p = small(dir.path());
        p.ingest().unwrap();
        let t = vec!["AA".to_string()];
        let tuned = p.tune(SetupKind::Baseline, Some(&t)).unwrap();
        p.experiment(&[SetupKind::Baseline], Some(&t)).unwrap();
        let plan = std::fs::read_to_string(p.experiment_dir(SetupKind::Baseline, "AA").join("plan.toml")).unwrap();
        let plan: ExperimentPlan = toml::from_str(&plan).unwrap();
        assert_eq!(plan.hyperparameters.as_ref(), tuned.get("AA"));
        assert!(!p.experiment_dir(SetupKind::Baseline, "AA").join("study_log.csv").exists());
    }
}
