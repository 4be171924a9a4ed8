//! Relation clustering: Ward HAC cut at rank k, and k-means for comparison.

mod hac;
mod kmeans;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use hac::{cut_at_k, hac_ward, Dendrogram, Merge};
pub use kmeans::{inertia, kmeans};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    #[serde(alias = "hac")]
    HacWard,
    Kmeans,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::HacWard => "hac",
            Algorithm::Kmeans => "kmeans",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hac" | "hac_ward" | "ward" => Ok(Algorithm::HacWard),
            "kmeans" | "k-means" => Ok(Algorithm::Kmeans),
            other => Err(Error::Config(format!("unknown clustering algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub instance_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    pub fn new(instance_ids: Vec<String>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if instance_ids.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} instance ids for {} labels",
                instance_ids.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Shape(format!("label {bad} outside 0..{k}")));
        }
        Ok(ClusterAssignment {
            instance_ids,
            labels,
            k,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.instance_ids.iter().map(String::as_str).zip(self.labels.iter().copied())
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "instance_id\tcluster_id")?;
        for (id, l) in self.iter() {
            writeln!(w, "{id}\t{l}")?;
        }
        w.flush()
    }

    /// Reads the TSV written by [`ClusterAssignment::write_tsv`]. `k` is taken
    /// as one more than the largest cluster id.
    pub fn read_tsv<R: Read>(r: R) -> Result<Self> {
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line.map_err(|e| Error::io("<assignment>", e))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let (id, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected two tab-separated columns".into(),
            })?;
            let label: usize = label.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad cluster id {label:?}"),
            })?;
            ids.push(id.to_string());
            labels.push(label);
        }
        let k = labels.iter().max().map_or(1, |m| m + 1);
        ClusterAssignment::new(ids, labels, k)
    }
}

pub fn write_dendrogram_tsv<W: Write>(d: &Dendrogram, mut w: W) -> std::io::Result<()> {
    writeln!(w, "a_id\tb_id\tcost\tsize")?;
    for m in &d.merges {
        writeln!(w, "{}\t{}\t{}\t{}", m.a, m.b, m.cost, m.size)?;
    }
    w.flush()
}

#[derive(Debug, Clone)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub dendrogram: Option<Dendrogram>,
}

/// Clusters the rows of `vectors` into at most `k` groups.
pub fn cluster_rows(
    vectors: &DMatrix<f64>,
    algorithm: Algorithm,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<Clustering> {
    let n = vectors.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must lie in 1..={n} (number of instances)")));
    }
    match algorithm {
        Algorithm::HacWard => {
            let d = hac_ward(vectors)?;
            let labels = cut_at_k(&d, k)?;
            Ok(Clustering {
                labels,
                dendrogram: Some(d),
            })
        }
        Algorithm::Kmeans => Ok(Clustering {
            labels: kmeans(vectors, k, seed, max_iter)?,
            dendrogram: None,
        }),
    }
}

/// Scales every row to unit Euclidean norm; zero rows stay zero.
pub fn l2_normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_round_trip() {
        let a = ClusterAssignment::new(vec!["x".into(), "y".into(), "z".into()], vec![0, 2, 0], 3).unwrap();
        let mut buf = Vec::new();
        a.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "instance_id\tcluster_id\nx\t0\ny\t2\nz\t0\n");
        assert_eq!(ClusterAssignment::read_tsv(buf.as_slice()).unwrap(), a);
        assert_eq!(a.n_clusters(), 2);
    }

    #[test]
    fn assignment_invariants() {
        assert!(ClusterAssignment::new(vec!["a".into()], vec![1], 1).is_err());
        assert!(ClusterAssignment::new(vec!["a".into()], vec![], 1).is_err());
        assert!(ClusterAssignment::new(vec![], vec![], 0).is_err());
    }

    #[test]
    fn dendrogram_tsv() {
        let d = hac_ward(&DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 5.0])).unwrap();
        let mut buf = Vec::new();
        write_dendrogram_tsv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("a_id\tb_id\tcost\tsize\n0\t1\t0.5\t2\n"));
    }

    #[test]
    fn k_bounds_checked_up_front() {
        let m = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 5.0]);
        assert!(cluster_rows(&m, Algorithm::HacWard, 4, 0, 10).is_err());
        assert!(cluster_rows(&m, Algorithm::Kmeans, 0, 0, 10).is_err());
        let c = cluster_rows(&m, Algorithm::HacWard, 2, 0, 10).unwrap();
        assert_eq!(c.labels, vec![0, 0, 1]);
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("hac".parse::<Algorithm>().unwrap(), Algorithm::HacWard);
        assert_eq!("kmeans".parse::<Algorithm>().unwrap(), Algorithm::Kmeans);
        assert!("dbscan".parse::<Algorithm>().is_err());
    }
}
