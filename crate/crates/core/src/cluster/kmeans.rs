use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn seed_plus_plus(rows: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (d, r) in d2.iter_mut().zip(rows) {
            *d = d.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Relabels so that labels run in order of each cluster's first member.
pub(crate) fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Sum of squared distances from each row to its cluster mean.
pub fn inertia(vectors: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let rows = rows_of(vectors);
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let p = vectors.ncols();
    let mut sums = vec![vec![0.0; p]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in rows.iter().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(r).for_each(|(s, x)| *s += x);
    }
    rows.iter()
        .zip(labels)
        .map(|(r, &l)| {
            let c: Vec<f64> = sums[l].iter().map(|s| s / counts[l] as f64).collect();
            sq_dist(r, &c)
        })
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic for a given seed.
///
/// A cluster that loses all members is re-seeded with the point farthest from
/// its current centroid. Stops when assignments no longer change or after
/// `max_iter` updates.
pub fn kmeans(vectors: &DMatrix<f64>, k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    let n = vectors.nrows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} out of range 1..={n}")));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be positive".into()));
    }
    if !vectors.iter().all(|x| x.is_finite()) {
        return Err(Error::Shape("input contains non-finite values".into()));
    }
    let rows = rows_of(vectors);
    let p = vectors.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(&rows, k, &mut rng);
    let mut labels: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();

    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; p]; k];
        let mut counts = vec![0usize; k];
        for (r, &l) in rows.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(r).for_each(|(s, x)| *s += x);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for (i, r) in rows.iter().enumerate() {
                let l = labels[i];
                if counts[l] < 2 {
                    continue;
                }
                let d = sq_dist(r, &centroids[l]);
                if d > 0.0 && far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                counts[labels[i]] -= 1;
                counts[c] = 1;
                labels[i] = c;
                centroids[c] = rows[i].clone();
            }
        }

        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(canonical_labels(&labels))
}
