//! Agglomerative clustering with Ward's minimum-variance linkage.
//!
//! Leaves get ids `0..n` in input order; the cluster created by merge step
//! `s` gets id `n + s`. Dissimilarities start as squared Euclidean
//! distances and are updated with the Lance–Williams recurrence for Ward,
//! so the recorded merge distance between clusters `A` and `B` equals
//! `2·|A|·|B|/(|A|+|B|)·‖mean(A) − mean(B)‖²`, twice the increase in
//! within-cluster sum of squares.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::ProfileVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Smaller of the two merged cluster ids.
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    /// Number of leaves in the new cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    /// Leaves in plotting order (depth-first, lower id first).
    pub leaf_order: Vec<usize>,
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ward linkage over the given points. Ties are broken by the smallest
/// `(min id, max id)` pair.
pub fn ward_linkage(labels: &[String], points: &[Vec<f64>]) -> Result<Dendrogram> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidInput("clustering needs at least two vectors".into()));
    }
    if labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: labels.len(),
        });
    }
    let unique: BTreeSet<&String> = labels.iter().collect();
    if unique.len() != n {
        return Err(Error::InvalidInput("duplicate country codes".into()));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: p.len(),
        });
    }

    let total = 2 * n - 1;
    let mut d = vec![vec![f64::INFINITY; total]; total];
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_euclidean(&points[i], &points[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut children = vec![None; total];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        // active is kept sorted, so the first strict minimum is the
        // lexicographically smallest tied pair
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                if d[i][j] < best.2 {
                    best = (i, j, d[i][j]);
                }
            }
        }
        let (i, j, dij) = best;
        let new = n + step;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        active.retain(|&c| c != i && c != j);
        for &k in &active {
            let nk = size[k] as f64;
            let v = ((ni + nk) * d[k][i] + (nj + nk) * d[k][j] - nk * dij) / (ni + nj + nk);
            d[k][new] = v;
            d[new][k] = v;
        }
        size[new] = size[i] + size[j];
        children[new] = Some((i, j));
        active.push(new);
        merges.push(Merge {
            a: i,
            b: j,
            distance: dij,
            size: size[new],
        });
    }

    let mut leaf_order = Vec::with_capacity(n);
    let mut stack = vec![total - 1];
    while let Some(c) = stack.pop() {
        match children[c] {
            Some((a, b)) => {
                stack.push(b);
                stack.push(a);
            }
            None => leaf_order.push(c),
        }
    }

    Ok(Dendrogram {
        labels: labels.to_vec(),
        merges,
        leaf_order,
    })
}

/// Ward dendrogram over country profile vectors.
pub fn ward_dendrogram(vectors: &[ProfileVector]) -> Result<Dendrogram> {
    let labels: Vec<String> = vectors.iter().map(|v| v.country_code.clone()).collect();
    let points: Vec<Vec<f64>> = vectors.iter().map(|v| v.components.clone()).collect();
    ward_linkage(&labels, &points)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Country code → cluster id in `1..=k`.
    pub clusters: BTreeMap<String, u32>,
}

impl ClusterAssignment {
    pub fn cluster_of(&self, code: &str) -> Option<u32> {
        self.clusters.get(code).copied()
    }

    /// Members of a cluster in code order.
    pub fn members(&self, cluster: u32) -> Vec<String> {
        self.clusters
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(code, _)| code.clone())
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("country,cluster\n");
        for (code, c) in &self.clusters {
            text.push_str(&format!("{code},{c}\n"));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut clusters = BTreeMap::new();
        for (k, line) in text.lines().enumerate().skip(1) {
            let perr = |m: &str| Error::Parse {
                path: path.to_path_buf(),
                row: k,
                message: m.to_string(),
            };
            let (code, c) = line.split_once(',').ok_or_else(|| perr("expected `country,cluster`"))?;
            let c: u32 = c.trim().parse().map_err(|_| perr("cluster id must be an integer"))?;
            clusters.insert(code.trim().to_string(), c);
        }
        let k = clusters.values().copied().collect::<BTreeSet<_>>().len();
        if clusters.values().any(|&c| c == 0 || c as usize > k) {
            return Err(Error::InvalidInput(format!(
                "{}: cluster ids must be 1..={k}",
                path.display()
            )));
        }
        Ok(ClusterAssignment { k, clusters })
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Cuts the tree into `k` clusters by undoing the last `k − 1` merges.
/// Cluster ids are assigned in order of each cluster's smallest code.
pub fn cut_clusters(dendrogram: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let n = dendrogram.labels.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("k must be in 1..={n}, got {k}")));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    for (step, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        parent[m.a] = n + step;
        parent[m.b] = n + step;
    }
    let mut groups: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        groups.entry(root).or_default().push(&dendrogram.labels[leaf]);
    }
    let mut groups: Vec<Vec<&String>> = groups.into_values().collect();
    for g in &mut groups {
        g.sort();
    }
    groups.sort_by(|x, y| x[0].cmp(y[0]));
    let mut clusters = BTreeMap::new();
    for (id, g) in groups.iter().enumerate() {
        for code in g {
            clusters.insert((*code).clone(), id as u32 + 1);
        }
    }
    Ok(ClusterAssignment { k, clusters })
}

/// Writes merge steps as `step,cluster_a,cluster_b,label_a,label_b,distance,size`.
/// Labels are filled for leaves and empty for internal clusters.
pub fn write_dendrogram_csv(path: &Path, dendrogram: &Dendrogram) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let label = |c: usize| dendrogram.labels.get(c).cloned().unwrap_or_default();
    writeln!(w, "step,cluster_a,cluster_b,label_a,label_b,distance,size").map_err(io)?;
    for (s, m) in dendrogram.merges.iter().enumerate() {
        writeln!(
            w,
            "{s},{},{},{},{},{:.17e},{}",
            m.a,
            m.b,
            label(m.a),
            label(m.b),
            m.distance,
            m.size
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
