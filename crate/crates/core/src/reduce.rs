//! Per-block PCA and concatenation.
//!
//! Each block directed to PCA is fit on its own rows only, then all blocks
//! are concatenated in feature-matrix order. Fitting a block never looks at
//! any other block, so a block's reduced columns are the same whatever else
//! is in the matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, RowDVector, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{BlockData, FeatureBlock, FeatureMatrix, Sparsity};

pub const DEFAULT_COMPONENTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// `n_components x input_width`, orthonormal rows.
    components: DMatrix<f64>,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn from_parts(mean: Vec<f64>, components_row_major: Vec<f64>, explained_variance: Vec<f64>) -> Result<Self> {
        let p = mean.len();
        let k = explained_variance.len();
        if components_row_major.len() != k * p {
            return Err(Error::Shape(format!(
                "component array has {} values, expected {k} x {p}",
                components_row_major.len()
            )));
        }
        Ok(PcaModel {
            mean,
            components: DMatrix::from_row_slice(k, p, &components_row_major),
            explained_variance,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn input_width(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// `mean + projected * components`.
    pub fn inverse_transform(&self, projected: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if projected.ncols() != self.n_components() {
            return Err(Error::Shape(format!(
                "projection has {} columns, model has {} components",
                projected.ncols(),
                self.n_components()
            )));
        }
        let mut out = projected * &self.components;
        let mean = RowDVector::from_row_slice(&self.mean);
        for mut row in out.row_iter_mut() {
            row += &mean;
        }
        Ok(out)
    }
}

fn check_finite(rows: &DMatrix<f64>) -> Result<()> {
    if rows.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Shape("input contains non-finite values".into()))
    }
}

fn center(rows: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    let mut centered = rows.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    centered
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
}

/// Unit vector orthogonal to every row of `basis`, built from the standard
/// basis vector with the largest residual.
fn completion_vector(p: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        orthogonalize(&mut e, basis);
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, e));
        }
    }
    let (norm, mut v) = best.expect("input width is positive");
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Fits PCA by SVD of the mean-centered rows.
///
/// Components are the top right-singular vectors ordered by singular value,
/// each flipped so its largest-magnitude entry is non-negative. When the
/// centered data has rank below `n_components`, the trailing components are
/// an orthonormal completion with zero explained variance.
pub fn pca_fit(rows: &DMatrix<f64>, n_components: usize) -> Result<PcaModel> {
    let (n, p) = rows.shape();
    if n < 2 {
        return Err(Error::Shape(format!("PCA needs at least 2 rows, got {n}")));
    }
    if n_components == 0 || n_components > n.min(p) {
        return Err(Error::Config(format!(
            "n_components = {n_components} out of range 1..={} for a {n} x {p} input",
            n.min(p)
        )));
    }
    check_finite(rows)?;

    let mean: Vec<f64> = rows.column_iter().map(|c| c.sum() / n as f64).collect();
    let centered = center(rows, &mean);
    let svd = SVD::new(centered, false, true);
    let v_t = svd.v_t.expect("right singular vectors were requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let s_max = order.first().map_or(0.0, |&i| sv[i]);
    let tol = s_max * f64::EPSILON * n.max(p) as f64;

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    let mut explained = Vec::with_capacity(n_components);
    for &i in order.iter().take(n_components) {
        if sv[i] <= tol || s_max == 0.0 {
            break;
        }
        let mut v: Vec<f64> = v_t.row(i).iter().copied().collect();
        fix_sign(&mut v);
        basis.push(v);
        explained.push(sv[i] * sv[i] / (n - 1) as f64);
    }
    if basis.len() < n_components {
        warn!(
            "centered data has rank {} < {n_components} components; completing with zero-variance directions",
            basis.len()
        );
        while basis.len() < n_components {
            let mut v = completion_vector(p, &basis);
            fix_sign(&mut v);
            basis.push(v);
            explained.push(0.0);
        }
    }

    let flat: Vec<f64> = basis.into_iter().flatten().collect();
    PcaModel::from_parts(mean, flat, explained)
}

/// `(rows - mean) * components^T`.
pub fn pca_transform(model: &PcaModel, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rows.ncols() != model.input_width() {
        return Err(Error::Shape(format!(
            "input has width {}, model expects {}",
            rows.ncols(),
            model.input_width()
        )));
    }
    Ok(center(rows, &model.mean) * model.components.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Passthrough,
    Pca(usize),
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Passthrough => f.write_str("passthrough"),
            Directive::Pca(k) => write!(f, "pca({k})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReductionPlan {
    pub directives: BTreeMap<String, Directive>,
}

impl ReductionPlan {
    pub fn passthrough(fm: &FeatureMatrix) -> Self {
        ReductionPlan {
            directives: fm
                .blocks
                .iter()
                .map(|b| (b.name.clone(), Directive::Passthrough))
                .collect(),
        }
    }

    /// Sparse blocks get PCA with `default_components`, clamped to what the
    /// block shape allows; dense blocks pass through. Entries in `overrides`
    /// replace the default for their block and are not clamped; an override
    /// of 0 means passthrough.
    pub fn for_matrix(
        fm: &FeatureMatrix,
        default_components: usize,
        overrides: &BTreeMap<String, usize>,
    ) -> Result<Self> {
        for name in overrides.keys() {
            if fm.block(name).is_none() {
                return Err(Error::Config(format!("PCA requested for unknown block {name:?}")));
            }
        }
        let n = fm.n_instances();
        let directives = fm
            .blocks
            .iter()
            .map(|b| {
                let d = match overrides.get(&b.name) {
                    Some(&0) => Directive::Passthrough,
                    Some(&k) => Directive::Pca(k),
                    None if b.sparsity() == Sparsity::Sparse => {
                        let k = default_components.min(n).min(b.width);
                        if k == 0 || n < 2 {
                            Directive::Passthrough
                        } else {
                            Directive::Pca(k)
                        }
                    }
                    None => Directive::Passthrough,
                };
                (b.name.clone(), d)
            })
            .collect();
        Ok(ReductionPlan { directives })
    }

    pub fn validate_for(&self, fm: &FeatureMatrix) -> Result<()> {
        for b in &fm.blocks {
            if !self.directives.contains_key(&b.name) {
                return Err(Error::Config(format!("reduction plan has no directive for block {:?}", b.name)));
            }
        }
        for name in self.directives.keys() {
            if fm.block(name).is_none() {
                return Err(Error::Config(format!("reduction plan names unknown block {name:?}")));
            }
        }
        Ok(())
    }
}

impl FromStr for ReductionPlan {
    type Err = Error;

    /// Parses `block=components` pairs separated by commas; `block=none`
    /// requests passthrough.
    fn from_str(s: &str) -> Result<Self> {
        let mut directives = BTreeMap::new();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (name, k) = parse_pca_arg(item)?;
            directives.insert(name, k.map_or(Directive::Passthrough, Directive::Pca));
        }
        Ok(ReductionPlan { directives })
    }
}

/// Parses `block=n` (or `block=none`).
pub fn parse_pca_arg(s: &str) -> Result<(String, Option<usize>)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected block=components, got {s:?}")))?;
    let k = match value.trim() {
        "none" | "passthrough" => None,
        v => Some(
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad component count in {s:?}")))?,
        ),
    };
    Ok((name.trim().to_string(), k))
}

pub fn block_matrix(block: &FeatureBlock) -> DMatrix<f64> {
    let n = block.n_rows();
    DMatrix::from_row_slice(n, block.width, &block.to_dense())
}

fn dense_block(name: &str, m: &DMatrix<f64>) -> FeatureBlock {
    let values = m.transpose().as_slice().to_vec();
    FeatureBlock {
        name: name.to_string(),
        width: m.ncols(),
        data: BlockData::Dense(values),
    }
}

/// Applies the plan block by block. The result has the same blocks in the
/// same order, all dense.
pub fn reduce_blocks(fm: &FeatureMatrix, plan: &ReductionPlan) -> Result<(FeatureMatrix, BTreeMap<String, PcaModel>)> {
    plan.validate_for(fm)?;
    let results: Vec<Result<(FeatureBlock, Option<PcaModel>)>> = fm
        .blocks
        .par_iter()
        .map(|b| match plan.directives[&b.name] {
            Directive::Passthrough => Ok((
                FeatureBlock {
                    name: b.name.clone(),
                    width: b.width,
                    data: BlockData::Dense(b.to_dense()),
                },
                None,
            )),
            Directive::Pca(k) => {
                let with_block = |e: Error| Error::Block {
                    block: b.name.clone(),
                    message: e.to_string(),
                };
                let rows = block_matrix(b);
                let model = pca_fit(&rows, k).map_err(with_block)?;
                let projected = pca_transform(&model, &rows).map_err(with_block)?;
                Ok((dense_block(&b.name, &projected), Some(model)))
            }
        })
        .collect();

    let mut blocks = Vec::with_capacity(results.len());
    let mut models = BTreeMap::new();
    for r in results {
        let (block, model) = r?;
        if let Some(m) = model {
            models.insert(block.name.clone(), m);
        }
        blocks.push(block);
    }
    Ok((FeatureMatrix::new(fm.instance_ids.clone(), blocks)?, models))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub block: String,
    pub start: usize,
    pub end: usize,
}

impl ColumnRange {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Concatenates all blocks, densified, in block order.
pub fn concat(fm: &FeatureMatrix) -> (DMatrix<f64>, Vec<ColumnRange>) {
    let n = fm.n_instances();
    let total: usize = fm.blocks.iter().map(|b| b.width).sum();
    let mut out = DMatrix::zeros(n, total);
    let mut provenance = Vec::with_capacity(fm.blocks.len());
    let mut start = 0;
    for b in &fm.blocks {
        let dense = b.to_dense();
        for i in 0..n {
            for j in 0..b.width {
                out[(i, start + j)] = dense[i * b.width + j];
            }
        }
        provenance.push(ColumnRange {
            block: b.name.clone(),
            start,
            end: start + b.width,
        });
        start += b.width;
    }
    (out, provenance)
}

#[derive(Debug, Clone)]
pub struct Reduction {
    pub matrix: DMatrix<f64>,
    pub provenance: Vec<ColumnRange>,
    pub models: BTreeMap<String, PcaModel>,
}

pub fn reduce_and_concat(fm: &FeatureMatrix, plan: &ReductionPlan) -> Result<Reduction> {
    let (reduced, models) = reduce_blocks(fm, plan)?;
    let (matrix, provenance) = concat(&reduced);
    Ok(Reduction {
        matrix,
        provenance,
        models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_is_identity(c: &DMatrix<f64>, tol: f64) -> bool {
        let g = c * c.transpose();
        (0..g.nrows()).all(|i| (0..g.ncols()).all(|j| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() < tol))
    }

    #[test]
    fn collinear_points() {
        let rows = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 5.0, 5.0]);
        let m = pca_fit(&rows, 2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components()[(0, 0)] - s).abs() < 1e-12);
        assert!((m.components()[(0, 1)] - s).abs() < 1e-12);
        assert_eq!(m.explained_variance()[1], 0.0);
        assert!(m.explained_variance()[0] > 0.0);
        assert!(gram_is_identity(m.components(), 1e-12));
    }

    #[test]
    fn centered_input_has_zero_mean() {
        let rows = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, -1.0, 0.0, 0.0, 2.0]);
        let m = pca_fit(&rows, 1).unwrap();
        assert!(m.mean().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn mean_row_projects_to_zero() {
        let rows = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 3.0, 1.0, 1.0, 0.5, -2.0, 4.0, 2.0, 2.0, 2.0]);
        let m = pca_fit(&rows, 2).unwrap();
        let mean = DMatrix::from_row_slice(1, 3, m.mean());
        let z = pca_transform(&m, &mean).unwrap();
        assert!(z.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn full_rank_reconstruction() {
        let rows = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 3.0, 1.0, 1.0, 0.5, -2.0, 4.0, 2.0, 2.0, 7.0]);
        let m = pca_fit(&rows, 3).unwrap();
        let back = m.inverse_transform(&pca_transform(&m, &rows).unwrap()).unwrap();
        assert!((back - rows).abs().max() < 1e-8);
    }

    #[test]
    fn argument_errors() {
        let rows = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        assert!(pca_fit(&rows, 0).is_err());
        assert!(pca_fit(&rows, 3).is_err());
        assert!(pca_fit(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0]), 1).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 0.0]);
        assert!(pca_fit(&bad, 1).is_err());
        let m = pca_fit(&rows, 1).unwrap();
        assert!(pca_transform(&m, &DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn constant_input_completes_basis() {
        let rows = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let m = pca_fit(&rows, 2).unwrap();
        assert_eq!(m.explained_variance(), &[0.0, 0.0]);
        assert!(gram_is_identity(m.components(), 1e-12));
    }

    fn two_block_matrix() -> FeatureMatrix {
        let ids: Vec<String> = (0..6).map(|i| format!("i{i}")).collect();
        let sparse_rows = (0..6u32)
            .map(|i| vec![(i % 4, 1.0 + f64::from(i)), (4 + i % 3, 0.5)])
            .collect();
        let dense_rows = (0..6).map(|i| vec![f64::from(i), -f64::from(i * i)]).collect();
        FeatureMatrix::new(
            ids,
            vec![
                FeatureBlock::sparse("types", 8, sparse_rows).unwrap(),
                FeatureBlock::dense("emb", 2, dense_rows).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn passthrough_plan_is_plain_concat() {
        let fm = two_block_matrix();
        let r = reduce_and_concat(&fm, &ReductionPlan::passthrough(&fm)).unwrap();
        assert_eq!(r.matrix.shape(), (6, 10));
        assert!(r.models.is_empty());
        assert_eq!(r.matrix[(1, 1)], 2.0);
        assert_eq!(r.matrix[(1, 5)], 0.5);
        assert_eq!(r.matrix[(1, 0)], 0.0);
        assert_eq!(r.matrix[(3, 8)], 3.0);
        assert_eq!(r.matrix[(3, 9)], -9.0);
        assert_eq!(r.provenance[1].range(), 8..10);
    }

    #[test]
    fn reduced_block_matches_standalone_fit() {
        let fm = two_block_matrix();
        let plan: ReductionPlan = "types=2,emb=none".parse().unwrap();
        let r = reduce_and_concat(&fm, &plan).unwrap();
        assert_eq!(r.matrix.ncols(), 4);
        let rows = block_matrix(&fm.blocks[0]);
        let m = pca_fit(&rows, 2).unwrap();
        let z = pca_transform(&m, &rows).unwrap();
        for i in 0..6 {
            for j in 0..2 {
                assert_eq!(r.matrix[(i, j)], z[(i, j)]);
            }
        }
        assert_eq!(r.models["types"], m);
    }

    #[test]
    fn plan_must_cover_blocks() {
        let fm = two_block_matrix();
        let partial: ReductionPlan = "types=2".parse().unwrap();
        assert!(reduce_blocks(&fm, &partial).is_err());
        let extra: ReductionPlan = "types=2,emb=none,ghost=3".parse().unwrap();
        assert!(reduce_blocks(&fm, &extra).is_err());
        let too_many: ReductionPlan = "types=7,emb=none".parse().unwrap();
        match reduce_blocks(&fm, &too_many) {
            Err(Error::Block { block, .. }) => assert_eq!(block, "types"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_plan_reduces_sparse_blocks() {
        let fm = two_block_matrix();
        let plan = ReductionPlan::for_matrix(&fm, 50, &BTreeMap::new()).unwrap();
        assert_eq!(plan.directives["types"], Directive::Pca(6));
        assert_eq!(plan.directives["emb"], Directive::Passthrough);
        let plan = ReductionPlan::for_matrix(&fm, 50, &[("emb".to_string(), 1)].into()).unwrap();
        assert_eq!(plan.directives["emb"], Directive::Pca(1));
        assert!(ReductionPlan::for_matrix(&fm, 50, &[("nope".to_string(), 1)].into()).is_err());
    }

    #[test]
    fn pca_arg_parsing() {
        assert_eq!(parse_pca_arg("tfidf=50").unwrap(), ("tfidf".into(), Some(50)));
        assert_eq!(parse_pca_arg("emb=none").unwrap(), ("emb".into(), None));
        assert!(parse_pca_arg("tfidf").is_err());
        assert!(parse_pca_arg("tfidf=x").is_err());
    }
}
