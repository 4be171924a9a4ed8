//! Brute-force reference implementations. None of these share code with the
//! library paths they check.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with their unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut out: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| (m[i][i], (0..n).map(|k| v[k][i]).collect()))
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Sample covariance (divisor n - 1) and column means.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rows.len();
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let cov = (0..p)
        .map(|a| {
            (0..p)
                .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    (cov, mean)
}

/// Largest-magnitude entry made non-negative.
pub fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Ward merge sequence by exhaustive search: at every step evaluate
/// `|A||B|/(|A|+|B|) * |cA - cB|^2` for all live pairs from the member
/// points and take the minimum, ties by (smaller id, larger id).
pub fn naive_ward(points: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let centroid = |members: &[usize]| -> Vec<f64> {
        let p = points[0].len();
        (0..p)
            .map(|j| members.iter().map(|&m| points[m][j]).sum::<f64>() / members.len() as f64)
            .collect()
    };
    let mut merges = Vec::new();
    let mut next_id = n;
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in 0..clusters.len() {
                if x == y || clusters[x].0 > clusters[y].0 {
                    continue;
                }
                let (ca, cb) = (centroid(&clusters[x].1), centroid(&clusters[y].1));
                let (na, nb) = (clusters[x].1.len() as f64, clusters[y].1.len() as f64);
                let d2: f64 = ca.iter().zip(&cb).map(|(a, b)| (a - b).powi(2)).sum();
                let delta = na * nb / (na + nb) * d2;
                let key = (delta, clusters[x].0, clusters[y].0);
                if best.is_none_or(|b| key < (b.0, b.1, b.2)) {
                    best = Some((delta, clusters[x].0, clusters[y].0, x, y));
                }
            }
        }
        let (delta, ida, idb, x, y) = best.unwrap();
        let mut members = clusters[x].1.clone();
        members.extend(&clusters[y].1);
        let (hi, lo) = if x > y { (x, y) } else { (y, x) };
        clusters.remove(hi);
        clusters.remove(lo);
        clusters.push((next_id, members));
        next_id += 1;
        merges.push((ida, idb, delta));
    }
    merges
}

/// Pair counts by double loop over gold-labeled instances:
/// (true positive, predicted positive, gold positive, n labeled).
pub fn brute_pair_counts(pred: &[usize], gold: &[Option<u32>]) -> (u64, u64, u64, usize) {
    let idx: Vec<usize> = (0..pred.len()).filter(|&i| gold[i].is_some()).collect();
    let (mut tp, mut pp, mut gp) = (0, 0, 0);
    for a in 0..idx.len() {
        for b in a + 1..idx.len() {
            let (i, j) = (idx[a], idx[b]);
            let same_pred = pred[i] == pred[j];
            let same_gold = gold[i] == gold[j];
            pp += u64::from(same_pred);
            gp += u64::from(same_gold);
            tp += u64::from(same_pred && same_gold);
        }
    }
    (tp, pp, gp, idx.len())
}

/// Minimum within-cluster sum of squares over every split into two
/// non-empty groups.
pub fn best_two_partition(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let sse = |members: &[usize]| -> f64 {
        let p = points[0].len();
        let c: Vec<f64> = (0..p)
            .map(|j| members.iter().map(|&m| points[m][j]).sum::<f64>() / members.len() as f64)
            .collect();
        members
            .iter()
            .map(|&m| points[m].iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum()
    };
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let (a, b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| mask & (1 << i) != 0);
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

/// Groups of instance indices per label, as a canonical set of sets.
pub fn memberships(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}
