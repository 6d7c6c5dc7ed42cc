//! Error metric and the comparison tables built from per-country results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};
use crate::experiment::plan::SetupKind;

/// Mean absolute percentage error in percent.
pub fn mape(actuals: &[f64], forecasts: &[f64]) -> Result<f64> {
    if actuals.len() != forecasts.len() {
        return Err(Error::Dimension {
            expected: actuals.len(),
            actual: forecasts.len(),
        });
    }
    if actuals.is_empty() {
        return Err(Error::InvalidInput("MAPE of zero points".into()));
    }
    let mut sum = 0.0;
    for (i, (&y, &f)) in actuals.iter().zip(forecasts).enumerate() {
        if y == 0.0 {
            return Err(Error::InvalidInput(format!("actual value {i} is zero")));
        }
        sum += ((y - f) / y).abs();
    }
    Ok(sum / actuals.len() as f64 * 100.0)
}

/// One country's test MAPE for each setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryRow {
    pub country: String,
    pub cluster: u32,
    pub baseline: f64,
    pub abo: f64,
    pub cbo: f64,
    pub snaive: f64,
}

impl CountryRow {
    pub fn get(&self, setup: SetupKind) -> f64 {
        match setup {
            SetupKind::Baseline => self.baseline,
            SetupKind::Abo => self.abo,
            SetupKind::Cbo => self.cbo,
            SetupKind::SNaive168 => self.snaive,
        }
    }

    /// Better of the two transfer setups; AbO wins ties.
    pub fn best_transfer(&self) -> (SetupKind, f64) {
        if self.cbo < self.abo {
            (SetupKind::Cbo, self.cbo)
        } else {
            (SetupKind::Abo, self.abo)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub cluster: u32,
    pub countries: usize,
    pub baseline: f64,
    pub abo: f64,
    pub cbo: f64,
    pub snaive: f64,
    pub best: SetupKind,
}

/// Mean over countries of `baseline − setup`; positive is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvements {
    pub abo: f64,
    pub cbo: f64,
    pub snaive: f64,
    pub best_transfer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<CountryRow>,
    pub clusters: Vec<ClusterRow>,
    pub improvements: Improvements,
}

/// Unweighted cluster means per setup; the best column is the lowest of the
/// transfer setups.
pub fn summarize(rows: &[CountryRow]) -> Result<Vec<ClusterRow>> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no rows to summarize".into()));
    }
    let mut groups: BTreeMap<u32, Vec<&CountryRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.cluster).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|(cluster, members)| {
            let n = members.len() as f64;
            let avg = |s: SetupKind| members.iter().map(|r| r.get(s)).sum::<f64>() / n;
            let (abo, cbo) = (avg(SetupKind::Abo), avg(SetupKind::Cbo));
            ClusterRow {
                cluster,
                countries: members.len(),
                baseline: avg(SetupKind::Baseline),
                abo,
                cbo,
                snaive: avg(SetupKind::SNaive168),
                best: if cbo < abo { SetupKind::Cbo } else { SetupKind::Abo },
            }
        })
        .collect())
}

pub fn improvement_table(rows: &[CountryRow]) -> Improvements {
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&CountryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Improvements {
        abo: mean(&|r| r.baseline - r.abo),
        cbo: mean(&|r| r.baseline - r.cbo),
        snaive: mean(&|r| r.baseline - r.snaive),
        best_transfer: mean(&|r| r.baseline - r.best_transfer().1),
    }
}

/// Assembles rows from `(country, setup) → MAPE` results. Every country in
/// `clusters` needs all four setups.
pub fn build_report(
    results: &BTreeMap<(String, SetupKind), f64>,
    clusters: &ClusterAssignment,
) -> Result<EvaluationReport> {
    let mut rows = Vec::new();
    for (country, &cluster) in &clusters.clusters {
        let get = |s: SetupKind| {
            results.get(&(country.clone(), s)).copied().ok_or_else(|| {
                Error::MissingArtifact(format!("experiments/{}/{country}", s.id()).into())
            })
        };
        rows.push(CountryRow {
            country: country.clone(),
            cluster,
            baseline: get(SetupKind::Baseline)?,
            abo: get(SetupKind::Abo)?,
            cbo: get(SetupKind::Cbo)?,
            snaive: get(SetupKind::SNaive168)?,
        });
    }
    rows.sort_by(|a, b| a.cluster.cmp(&b.cluster).then(a.country.cmp(&b.country)));
    Ok(EvaluationReport {
        clusters: summarize(&rows)?,
        improvements: improvement_table(&rows),
        rows,
    })
}

fn num(v: f64) -> String {
    format!("{v:.4}")
}

impl EvaluationReport {
    /// Per-country table followed by the average-improvement row.
    pub fn country_table_csv(&self) -> String {
        let mut out = String::from("country,cluster,baseline,abo,cbo,snaive168,best_tl_mape,best_tl_setup\n");
        for r in &self.rows {
            let (setup, best) = r.best_transfer();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.country,
                r.cluster,
                num(r.baseline),
                num(r.abo),
                num(r.cbo),
                num(r.snaive),
                num(best),
                setup.label()
            );
        }
        let i = &self.improvements;
        let _ = writeln!(
            out,
            "average_improvement,,,{},{},{},{},TL",
            num(i.abo),
            num(i.cbo),
            num(i.snaive),
            num(i.best_transfer)
        );
        out
    }

    pub fn cluster_table_csv(&self) -> String {
        let mut out = String::from("cluster,baseline,abo,cbo,snaive168,best_setup\n");
        for c in &self.clusters {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.cluster,
                num(c.baseline),
                num(c.abo),
                num(c.cbo),
                num(c.snaive),
                c.best.label()
            );
        }
        out
    }

    /// Long-format bars: one line per country and setup.
    pub fn country_bars_csv(&self) -> String {
        let mut out = String::from("country,cluster,setup,mape\n");
        for r in &self.rows {
            for s in SetupKind::ALL {
                let _ = writeln!(out, "{},{},{},{}", r.country, r.cluster, s.label(), num(r.get(s)));
            }
        }
        out
    }

    pub fn cluster_bars_csv(&self) -> String {
        let mut out = String::from("cluster,setup,mape\n");
        for c in &self.clusters {
            for (s, v) in [
                (SetupKind::Baseline, c.baseline),
                (SetupKind::Abo, c.abo),
                (SetupKind::Cbo, c.cbo),
                (SetupKind::SNaive168, c.snaive),
            ] {
                let _ = writeln!(out, "{},{},{}", c.cluster, s.label(), num(v));
            }
        }
        out
    }

    /// Writes the four CSVs into `dir`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("country_table.csv", self.country_table_csv()),
            ("cluster_table.csv", self.cluster_table_csv()),
            ("country_bars.csv", self.country_bars_csv()),
            ("cluster_bars.csv", self.cluster_bars_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
