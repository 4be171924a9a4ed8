//! Pairwise precision, recall and F1 against gold relation labels.
//!
//! Only instances with a gold label take part. Over all unordered pairs of
//! such instances, a pair is predicted-positive when both share a cluster,
//! gold-positive when both share a gold label, and a true positive when both
//! hold.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_evaluated: usize,
    pub true_positive: u64,
    pub predicted_positive: u64,
    pub gold_positive: u64,
}

impl EvalReport {
    /// Builds a report from pair counts with the 0-denominator conventions
    /// P = 0, R = 0, F1 = 0.
    pub fn from_counts(n_evaluated: usize, tp: u64, predicted: u64, gold: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            precision,
            recall,
            f1,
            n_evaluated,
            true_positive: tp,
            predicted_positive: predicted,
            gold_positive: gold,
        }
    }
}

fn pairs(count: u64) -> u64 {
    count * count.saturating_sub(1) / 2
}

pub fn pairwise_f1(assignment: &ClusterAssignment, gold: &BTreeMap<String, String>) -> Result<EvalReport> {
    let mut by_cluster: HashMap<usize, u64> = HashMap::new();
    let mut by_gold: HashMap<&str, u64> = HashMap::new();
    let mut by_both: HashMap<(usize, &str), u64> = HashMap::new();
    let mut n = 0usize;
    for (id, cluster) in assignment.iter() {
        let Some(label) = gold.get(id) else {
            continue;
        };
        n += 1;
        *by_cluster.entry(cluster).or_default() += 1;
        *by_gold.entry(label.as_str()).or_default() += 1;
        *by_both.entry((cluster, label.as_str())).or_default() += 1;
    }
    if n < 2 {
        return Err(Error::Config(format!(
            "pairwise evaluation needs at least 2 gold-labeled instances, found {n}"
        )));
    }
    let sum = |counts: &mut dyn Iterator<Item = u64>| counts.map(pairs).sum::<u64>();
    Ok(EvalReport::from_counts(
        n,
        sum(&mut by_both.values().copied()),
        sum(&mut by_cluster.values().copied()),
        sum(&mut by_gold.values().copied()),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingRow {
    pub name: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingTable {
    pub rows: Vec<RankingRow>,
}

/// Sorts runs by F1, best first; equal scores are ordered by name.
pub fn compare_runs(reports: &[(String, EvalReport)]) -> RankingTable {
    let mut rows: Vec<RankingRow> = reports
        .iter()
        .map(|(name, report)| RankingRow {
            name: name.clone(),
            report: *report,
        })
        .collect();
    rows.sort_by(|a, b| b.report.f1.total_cmp(&a.report.f1).then_with(|| a.name.cmp(&b.name)));
    RankingTable { rows }
}

impl RankingTable {
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(3);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}", "run", "P", "R", "F1", "n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>6.1}  {:>6.1}  {:>6.1}  {:>8}",
                r.name,
                100.0 * r.report.precision,
                100.0 * r.report.recall,
                100.0 * r.report.f1,
                r.report.n_evaluated
            );
        }
        out
    }
}
