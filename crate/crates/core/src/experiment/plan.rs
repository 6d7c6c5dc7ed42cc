use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::nn::mlp::Hyperparameters;
use crate::series::SplitSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetupKind {
    Baseline,
    Abo,
    Cbo,
    #[serde(rename = "snaive")]
    SNaive168,
}

impl SetupKind {
    pub const ALL: [SetupKind; 4] = [SetupKind::Baseline, SetupKind::Abo, SetupKind::Cbo, SetupKind::SNaive168];
    pub const TRANSFER: [SetupKind; 2] = [SetupKind::Abo, SetupKind::Cbo];

    /// Short lowercase id used in paths and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            SetupKind::Baseline => "baseline",
            SetupKind::Abo => "abo",
            SetupKind::Cbo => "cbo",
            SetupKind::SNaive168 => "snaive",
        }
    }

    /// Display label as used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            SetupKind::Baseline => "Baseline",
            SetupKind::Abo => "AbO",
            SetupKind::Cbo => "CbO",
            SetupKind::SNaive168 => "sNaive(168)",
        }
    }

    pub fn is_transfer(self) -> bool {
        matches!(self, SetupKind::Abo | SetupKind::Cbo)
    }
}

impl fmt::Display for SetupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SetupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(SetupKind::Baseline),
            "abo" => Ok(SetupKind::Abo),
            "cbo" => Ok(SetupKind::Cbo),
            "snaive" | "snaive168" | "snaive(168)" => Ok(SetupKind::SNaive168),
            other => Err(Error::InvalidInput(format!("unknown setup `{other}`"))),
        }
    }
}

/// Countries whose data pre-trains the source model for `target`.
pub fn build_source_set(
    setup: SetupKind,
    target: &str,
    countries: &[String],
    clusters: Option<&ClusterAssignment>,
) -> Result<Vec<String>> {
    if !countries.iter().any(|c| c == target) {
        return Err(Error::Experiment(format!("target {target} is not in the dataset")));
    }
    match setup {
        SetupKind::Baseline | SetupKind::SNaive168 => Ok(Vec::new()),
        SetupKind::Abo => Ok(countries.iter().filter(|c| *c != target).cloned().collect()),
        SetupKind::Cbo => {
            let clusters = clusters
                .ok_or_else(|| Error::Experiment("the CbO setup needs a cluster assignment".into()))?;
            let own = clusters
                .cluster_of(target)
                .ok_or_else(|| Error::Experiment(format!("target {target} has no cluster")))?;
            let sources: Vec<String> = countries
                .iter()
                .filter(|c| *c != target && clusters.cluster_of(c) == Some(own))
                .cloned()
                .collect();
            if sources.is_empty() {
                return Err(Error::Experiment(format!(
                    "{target} is alone in cluster {own}; CbO has no source countries, use AbO instead"
                )));
            }
            Ok(sources)
        }
    }
}

/// One experiment: a setup applied to a single target country.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub setup: SetupKind,
    pub target: String,
    pub sources: Vec<String>,
    pub splits: SplitSpec,
    /// Filled by the search, or fixed in advance to skip it.
    pub hyperparameters: Option<Hyperparameters>,
    pub ensemble_size: usize,
    pub master_seed: u64,
}

impl ExperimentPlan {
    pub fn new(
        setup: SetupKind,
        target: &str,
        countries: &[String],
        clusters: Option<&ClusterAssignment>,
        splits: SplitSpec,
        ensemble_size: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if ensemble_size == 0 {
            return Err(Error::Experiment("ensemble size must be at least 1".into()));
        }
        Ok(ExperimentPlan {
            setup,
            target: target.to_string(),
            sources: build_source_set(setup, target, countries, clusters)?,
            splits,
            hyperparameters: None,
            ensemble_size,
            master_seed,
        })
    }

    /// Role prefix for seeds derived within this experiment.
    pub fn seed_role(&self, what: &str) -> String {
        format!("{}/{}/{what}", self.setup.id(), self.target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn codes(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn assignment(pairs: &[(&str, u32)]) -> ClusterAssignment {
        let clusters: BTreeMap<String, u32> = pairs.iter().map(|(c, k)| (c.to_string(), *k)).collect();
        let k = clusters.values().max().copied().unwrap_or(0) as usize;
        ClusterAssignment { k, clusters }
    }

    #[test]
    fn abo_excludes_only_target() {
        let all: Vec<String> = (0..27).map(|i| format!("C{i:02}")).collect();
        let s = build_source_set(SetupKind::Abo, "C05", &all, None).unwrap();
        assert_eq!(s.len(), 26);
        assert!(!s.contains(&"C05".to_string()));
    }

    #[test]
    fn cbo_is_cluster_minus_target() {
        let all = codes(&["A", "B", "C", "D"]);
        let cl = assignment(&[("A", 1), ("B", 1), ("C", 1), ("D", 2)]);
        assert_eq!(build_source_set(SetupKind::Cbo, "B", &all, Some(&cl)).unwrap(), codes(&["A", "C"]));
        let err = build_source_set(SetupKind::Cbo, "D", &all, Some(&cl)).unwrap_err();
        assert!(err.to_string().contains("AbO"));
        assert!(build_source_set(SetupKind::Cbo, "A", &all, None).is_err());
    }

    #[test]
    fn baseline_and_naive_have_no_sources() {
        let all = codes(&["A", "B"]);
        assert!(build_source_set(SetupKind::Baseline, "A", &all, None).unwrap().is_empty());
        assert!(build_source_set(SetupKind::SNaive168, "A", &all, None).unwrap().is_empty());
        assert!(build_source_set(SetupKind::Baseline, "Z", &all, None).is_err());
    }

    #[test]
    fn setup_names_round_trip() {
        for s in SetupKind::ALL {
            assert_eq!(s.id().parse::<SetupKind>().unwrap(), s);
        }
    }

    proptest! {
        #[test]
        fn abo_partition(n in 2usize..40) {
            let all: Vec<String> = (0..n).map(|i| format!("K{i}")).collect();
            let mut as_source = BTreeMap::new();
            let mut as_target = BTreeMap::new();
            for t in &all {
                *as_target.entry(t.clone()).or_insert(0) += 1;
                for s in build_source_set(SetupKind::Abo, t, &all, None).unwrap() {
                    prop_assert_ne!(&s, t);
                    *as_source.entry(s).or_insert(0) += 1;
                }
            }
            for c in &all {
                prop_assert_eq!(as_source[c], n - 1);
                prop_assert_eq!(as_target[c], 1);
            }
        }
    }
}
