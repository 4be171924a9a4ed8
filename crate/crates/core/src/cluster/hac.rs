use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agglomeration step. Leaves have ids `0..n`; the cluster created by
/// step `t` gets id `n + t`. `a < b` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Increase of the within-cluster sum of squares caused by the merge.
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_leaves;
        if n == 0 || self.merges.len() != n - 1 {
            return Err(Error::Shape(format!(
                "dendrogram over {n} leaves must have {} merges, has {}",
                n.saturating_sub(1),
                self.merges.len()
            )));
        }
        let mut used = vec![false; 2 * n - 1];
        let mut sizes = vec![1usize; 2 * n - 1];
        for (t, m) in self.merges.iter().enumerate() {
            let new_id = n + t;
            for id in [m.a, m.b] {
                if id >= new_id || used[id] {
                    return Err(Error::Shape(format!("merge {t} reuses or forward-references cluster {id}")));
                }
                used[id] = true;
            }
            sizes[new_id] = sizes[m.a] + sizes[m.b];
            if sizes[new_id] != m.size {
                return Err(Error::Shape(format!("merge {t} records size {}, expected {}", m.size, sizes[new_id])));
            }
        }
        Ok(())
    }
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Ward's minimum-variance agglomerative clustering.
///
/// Each step merges the pair minimizing
/// `|A||B| / (|A| + |B|) * |centroid(A) - centroid(B)|^2`, ties broken by the
/// smaller cluster id and then the larger one. Costs of the merged cluster
/// against the rest are updated with the Lance-Williams recurrence. Uses
/// `n(n-1)/2` floats for the pairwise costs.
pub fn hac_ward(vectors: &DMatrix<f64>) -> Result<Dendrogram> {
    let (n, p) = vectors.shape();
    if n < 2 {
        return Err(Error::Shape(format!("clustering needs at least 2 rows, got {n}")));
    }
    if !vectors.iter().all(|x| x.is_finite()) {
        return Err(Error::Shape("input contains non-finite values".into()));
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| vectors.row(i).iter().copied().collect())
        .collect();
    // Slot i holds the cost between the clusters in slots i and j > i.
    let mut cost: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let rows = &rows;
            (i + 1..n).map(move |j| {
                let d2: f64 = (0..p).map(|c| (rows[i][c] - rows[j][c]).powi(2)).sum();
                0.5 * d2
            })
        })
        .collect();
    let get = |cost: &[f64], i: usize, j: usize| {
        if i < j {
            cost[tri_index(n, i, j)]
        } else {
            cost[tri_index(n, j, i)]
        }
    };

    let mut id: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // Best partner among active slots whose cluster id is larger.
    let mut nn: Vec<Option<(f64, usize)>> = vec![None; n];

    let scan = |cost: &[f64], id: &[usize], active: &[bool], i: usize| -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for j in 0..n {
            if j == i || !active[j] || id[j] < id[i] {
                continue;
            }
            let c = get(cost, i, j);
            let better = match best {
                None => true,
                Some((bc, bj)) => c < bc || (c == bc && id[j] < id[bj]),
            };
            if better {
                best = Some((c, j));
            }
        }
        best
    };
    for (i, slot) in nn.iter_mut().enumerate() {
        *slot = scan(&cost, &id, &active, i);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if let Some((c, j)) = nn[i] {
                let better = match pick {
                    None => true,
                    Some((pc, pi, pj)) => {
                        c < pc || (c == pc && (id[i], id[j]) < (id[pi], id[pj]))
                    }
                };
                if better {
                    pick = Some((c, i, j));
                }
            }
        }
        let (delta, sa, sb) = pick.expect("two or more clusters remain");
        let (na, nb) = (size[sa] as f64, size[sb] as f64);

        for k in 0..n {
            if !active[k] || k == sa || k == sb {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((na + nk) * get(&cost, k, sa) + (nb + nk) * get(&cost, k, sb) - nk * delta)
                / (na + nb + nk);
            let idx = if k < sa { tri_index(n, k, sa) } else { tri_index(n, sa, k) };
            cost[idx] = updated;
        }

        let (ida, idb) = (id[sa].min(id[sb]), id[sa].max(id[sb]));
        merges.push(Merge {
            a: ida,
            b: idb,
            cost: delta,
            size: size[sa] + size[sb],
        });

        // The merged cluster lives in slot `sa` under the newest id.
        id[sa] = n + step;
        size[sa] += size[sb];
        active[sb] = false;
        nn[sb] = None;
        nn[sa] = None;

        for k in 0..n {
            if !active[k] || k == sa {
                continue;
            }
            match nn[k] {
                Some((_, j)) if j == sa || j == sb => nn[k] = scan(&cost, &id, &active, k),
                Some((c, _)) => {
                    let to_new = get(&cost, k, sa);
                    if to_new < c {
                        nn[k] = Some((to_new, sa));
                    }
                }
                None => nn[k] = scan(&cost, &id, &active, k),
            }
        }
    }

    Ok(Dendrogram { n_leaves: n, merges })
}

/// Labels leaves after undoing the last `k - 1` merges. Labels run
/// `0..k` in order of each cluster's smallest leaf index.
pub fn cut_at_k(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.n_leaves;
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} out of range 1..={n}")));
    }
    if dendrogram.merges.len() + 1 != n {
        return Err(Error::Shape("dendrogram is incomplete".into()));
    }
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (t, m) in dendrogram.merges.iter().take(n - k).enumerate() {
        let new_id = n + t;
        parent[m.a] = new_id;
        parent[m.b] = new_id;
    }
    let mut label_of_root = std::collections::HashMap::new();
    let labels = (0..n)
        .map(|leaf| {
            let root = find(&mut parent, leaf);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect();
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn four_points_on_a_line() {
        let d = hac_ward(&col(&[0.0, 1.0, 10.0, 11.0])).unwrap();
        d.validate().unwrap();
        assert_eq!(d.merges[0], Merge { a: 0, b: 1, cost: 0.5, size: 2 });
        assert_eq!(d.merges[1], Merge { a: 2, b: 3, cost: 0.5, size: 2 });
        assert_eq!(d.merges[2], Merge { a: 4, b: 5, cost: 100.0, size: 4 });
        assert_eq!(cut_at_k(&d, 2).unwrap(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn two_points() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, -2.0]);
        let d = hac_ward(&m).unwrap();
        assert_eq!(d.merges.len(), 1);
        assert_eq!(d.merges[0].cost, 25.0 / 2.0);
    }

    #[test]
    fn duplicated_points_merge_at_zero_cost() {
        let d = hac_ward(&col(&[3.0, -1.0, 7.0, 3.0, -1.0, 7.0])).unwrap();
        assert!(d.merges[..3].iter().all(|m| m.cost == 0.0));
        assert!(d.merges[3].cost > 0.0);
    }

    #[test]
    fn cut_extremes() {
        let d = hac_ward(&col(&[0.0, 4.0, 1.0, 9.0, 2.5])).unwrap();
        assert_eq!(cut_at_k(&d, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(cut_at_k(&d, 1).unwrap(), vec![0; 5]);
        assert!(cut_at_k(&d, 0).is_err());
        assert!(cut_at_k(&d, 6).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(hac_ward(&col(&[1.0])).is_err());
        assert!(hac_ward(&col(&[1.0, f64::INFINITY])).is_err());
    }

    #[test]
    fn validate_catches_corruption() {
        let mut d = hac_ward(&col(&[0.0, 1.0, 10.0, 11.0])).unwrap();
        d.merges[2].size = 3;
        assert!(d.validate().is_err());
        d.merges[2].size = 4;
        d.merges[2].a = 0;
        assert!(d.validate().is_err());
    }
}
