//! Sentence representations for relation instances.
//!
//! Five blocks are available:
//!
//! | block       | kind   | width          |
//! |-------------|--------|----------------|
//! | `tfidf`     | sparse | corpus vocab   |
//! | `emb_sum`   | dense  | embedding dim  |
//! | `emb_idf`   | dense  | embedding dim  |
//! | `emb_dep`   | dense  | embedding dim  |
//! | `ent_types` | sparse | type vocab     |
//!
//! `emb_dep` is the dependency re-weighted embedding: every token occurrence
//! `w` contributes `f(w) * v(w)` where `f(w) = c_in * |W| / |D|` for tokens on
//! the dependency path and `c_out` otherwise. Out-of-vocabulary tokens
//! contribute nothing.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, Corpus, Idf, RelationInstance};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

pub const DEFAULT_C_IN: f64 = 1.85;
pub const DEFAULT_C_OUT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub c_in: f64,
    pub c_out: f64,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig {
            c_in: DEFAULT_C_IN,
            c_out: DEFAULT_C_OUT,
        }
    }
}

impl WeightingConfig {
    pub fn new(c_in: f64, c_out: f64) -> Result<Self> {
        let cfg = WeightingConfig { c_in, c_out };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_in.is_finite() && self.c_in >= 1.0) {
            return Err(Error::Config(format!("c_in must be >= 1, got {}", self.c_in)));
        }
        if !(self.c_out.is_finite() && self.c_out >= 0.0) {
            return Err(Error::Config(format!("c_out must be >= 0, got {}", self.c_out)));
        }
        Ok(())
    }
}

/// What to do with an instance whose dependency path is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegeneratePolicy {
    #[default]
    Error,
    SkipInstance,
    /// Weight every token with `c_out`.
    AllCOut,
}

impl FromStr for DegeneratePolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error" => Ok(Self::Error),
            "skip-instance" | "skip" => Ok(Self::SkipInstance),
            "all-c-out" | "all-c_out" => Ok(Self::AllCOut),
            other => Err(Error::Config(format!("unknown degenerate-path policy {other:?}"))),
        }
    }
}

/// Weight of one token occurrence. `path` holds normalized path terms.
pub fn dep_weight(
    token: &str,
    sentence_len: usize,
    path: &HashSet<String>,
    cfg: &WeightingConfig,
) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::DegeneratePath { id: String::new() });
    }
    if path.contains(&normalize(token)) {
        Ok(cfg.c_in * sentence_len as f64 / path.len() as f64)
    } else {
        Ok(cfg.c_out)
    }
}

fn accumulate(out: &mut [f64], weight: f64, v: &[f32]) {
    for (o, &x) in out.iter_mut().zip(v) {
        *o += weight * f64::from(x);
    }
}

/// Weighted sum `sum_i weight(w_i) * v(w_i)` over token occurrences.
fn weighted_sum<F>(inst: &RelationInstance, table: &EmbeddingTable, mut weight: F) -> Result<Vec<f64>>
where
    F: FnMut(&str) -> Result<f64>,
{
    let mut out = vec![0.0; table.dim()];
    for token in &inst.tokens {
        if let Some(v) = table.lookup(token) {
            let w = weight(token)?;
            accumulate(&mut out, w, v);
        }
    }
    Ok(out)
}

pub fn dep_reweighted_vector(
    inst: &RelationInstance,
    table: &EmbeddingTable,
    cfg: &WeightingConfig,
) -> Result<Vec<f64>> {
    let path = inst.path_set();
    if path.is_empty() {
        return Err(Error::DegeneratePath {
            id: inst.id.clone(),
        });
    }
    let n = inst.tokens.len();
    weighted_sum(inst, table, |t| dep_weight(t, n, &path, cfg))
}

pub fn sum_embedding_vector(inst: &RelationInstance, table: &EmbeddingTable) -> Vec<f64> {
    let mut out = vec![0.0; table.dim()];
    for token in &inst.tokens {
        if let Some(v) = table.lookup(token) {
            accumulate(&mut out, 1.0, v);
        }
    }
    out
}

pub fn idf_embedding_vector(inst: &RelationInstance, table: &EmbeddingTable, idf: &Idf) -> Vec<f64> {
    let mut out = vec![0.0; table.dim()];
    for token in &inst.tokens {
        if let Some(v) = table.lookup(token) {
            accumulate(&mut out, idf.weight(token), v);
        }
    }
    out
}

/// Sparse row: `(column, value)` pairs sorted by column, no explicit zeros.
pub type SparseRow = Vec<(u32, f64)>;

/// Ordered token list with index lookup, used as the TF-IDF column space.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl TermVocabulary {
    pub fn new(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        TermVocabulary { terms, index }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::new(corpus.vocabulary())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(&normalize(token)).copied()
    }
}

/// Raw term count times idf, over vocabulary columns.
pub fn tfidf_vector(inst: &RelationInstance, vocab: &TermVocabulary, idf: &Idf) -> SparseRow {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for token in &inst.tokens {
        if let Some(col) = vocab.index_of(token) {
            *counts.entry(col).or_insert(0) += 1;
        }
    }
    let mut row: SparseRow = counts
        .into_iter()
        .map(|(col, tf)| {
            let term = &vocab.terms[col as usize];
            let w = idf.get(term).unwrap_or_else(|| idf.unseen());
            (col, f64::from(tf) * w)
        })
        .filter(|&(_, v)| v != 0.0)
        .collect();
    row.sort_unstable_by_key(|&(c, _)| c);
    row
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeKind {
    KbType,
    NerTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeEntry {
    pub role: Role,
    pub kind: TypeKind,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TypeVocabulary {
    entries: Vec<TypeEntry>,
    index: HashMap<TypeEntry, u32>,
}

impl TypeVocabulary {
    pub fn entries(&self) -> &[TypeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, entry: &TypeEntry) -> Option<u32> {
        self.index.get(entry).copied()
    }

    fn push(&mut self, entry: TypeEntry) {
        if !self.index.contains_key(&entry) {
            self.index.insert(entry.clone(), self.entries.len() as u32);
            self.entries.push(entry);
        }
    }
}

fn instance_types(inst: &RelationInstance) -> impl Iterator<Item = TypeEntry> + '_ {
    [(Role::Head, &inst.head), (Role::Tail, &inst.tail)]
        .into_iter()
        .flat_map(|(role, m)| {
            m.kb_types
                .iter()
                .map(move |t| TypeEntry {
                    role,
                    kind: TypeKind::KbType,
                    label: t.clone(),
                })
                .chain(std::iter::once(TypeEntry {
                    role,
                    kind: TypeKind::NerTag,
                    label: m.ner_tag.clone(),
                }))
        })
}

/// One entry per distinct (role, kind, label), in first-occurrence order.
pub fn build_type_vocabulary(corpus: &Corpus) -> TypeVocabulary {
    let mut tv = TypeVocabulary::default();
    for inst in corpus.instances() {
        for e in instance_types(inst) {
            tv.push(e);
        }
    }
    tv
}

/// Multi-hot indicator over `tv`; labels missing from `tv` are dropped.
pub fn entity_type_vector(inst: &RelationInstance, tv: &TypeVocabulary) -> SparseRow {
    let cols: BTreeSet<u32> = instance_types(inst).filter_map(|e| tv.index_of(&e)).collect();
    cols.into_iter().map(|c| (c, 1.0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    #[serde(rename = "tfidf")]
    Tfidf,
    #[serde(rename = "emb_sum")]
    EmbSum,
    #[serde(rename = "emb_idf")]
    EmbIdf,
    #[serde(rename = "emb_dep")]
    EmbDep,
    #[serde(rename = "ent_types")]
    EntTypes,
}

impl BlockKind {
    pub const ALL: [BlockKind; 5] = [
        BlockKind::Tfidf,
        BlockKind::EmbSum,
        BlockKind::EmbIdf,
        BlockKind::EmbDep,
        BlockKind::EntTypes,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Tfidf => "tfidf",
            BlockKind::EmbSum => "emb_sum",
            BlockKind::EmbIdf => "emb_idf",
            BlockKind::EmbDep => "emb_dep",
            BlockKind::EntTypes => "ent_types",
        }
    }

    pub fn sparsity(self) -> Sparsity {
        match self {
            BlockKind::Tfidf | BlockKind::EntTypes => Sparsity::Sparse,
            _ => Sparsity::Dense,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlockKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BlockKind::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature block {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    /// Row-major `n x width`.
    Dense(Vec<f64>),
    Sparse(Vec<SparseRow>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub name: String,
    pub width: usize,
    pub data: BlockData,
}

impl FeatureBlock {
    pub fn dense(name: impl Into<String>, width: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::Block {
                    block: name,
                    message: format!("row {i} has width {}, expected {width}", r.len()),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(FeatureBlock {
            name,
            width,
            data: BlockData::Dense(values),
        })
    }

    pub fn sparse(name: impl Into<String>, width: usize, rows: Vec<SparseRow>) -> Result<Self> {
        let name = name.into();
        for (i, r) in rows.iter().enumerate() {
            if r.iter().any(|&(c, _)| c as usize >= width) || r.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Block {
                    block: name,
                    message: format!("row {i} has unsorted or out-of-range columns"),
                });
            }
        }
        Ok(FeatureBlock {
            name,
            width,
            data: BlockData::Sparse(rows),
        })
    }

    pub fn sparsity(&self) -> Sparsity {
        match self.data {
            BlockData::Dense(_) => Sparsity::Dense,
            BlockData::Sparse(_) => Sparsity::Sparse,
        }
    }

    pub fn n_rows(&self) -> usize {
        match &self.data {
            BlockData::Dense(v) if self.width == 0 => v.len(),
            BlockData::Dense(v) => v.len() / self.width,
            BlockData::Sparse(rows) => rows.len(),
        }
    }

    /// Row-major dense copy of the block.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.data {
            BlockData::Dense(v) => v.clone(),
            BlockData::Sparse(rows) => {
                let mut out = vec![0.0; rows.len() * self.width];
                for (i, row) in rows.iter().enumerate() {
                    for &(c, v) in row {
                        out[i * self.width + c as usize] = v;
                    }
                }
                out
            }
        }
    }

    fn l2_normalize(&mut self) {
        fn scale(xs: &mut dyn Iterator<Item = &mut f64>, norm: f64) {
            if norm > 0.0 {
                xs.for_each(|x| *x /= norm);
            }
        }
        match &mut self.data {
            BlockData::Dense(v) if self.width > 0 => {
                for row in v.chunks_mut(self.width) {
                    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                    scale(&mut row.iter_mut(), norm);
                }
            }
            BlockData::Dense(_) => {}
            BlockData::Sparse(rows) => {
                for row in rows {
                    let norm = row.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
                    scale(&mut row.iter_mut().map(|(_, x)| x), norm);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub instance_ids: Vec<String>,
    pub blocks: Vec<FeatureBlock>,
}

impl FeatureMatrix {
    pub fn new(instance_ids: Vec<String>, blocks: Vec<FeatureBlock>) -> Result<Self> {
        let fm = FeatureMatrix {
            instance_ids,
            blocks,
        };
        fm.validate()?;
        Ok(fm)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for b in &self.blocks {
            if !names.insert(b.name.as_str()) {
                return Err(Error::Block {
                    block: b.name.clone(),
                    message: "duplicate block name".into(),
                });
            }
            if let BlockData::Dense(v) = &b.data {
                if v.len() != self.instance_ids.len() * b.width {
                    return Err(Error::Block {
                        block: b.name.clone(),
                        message: format!(
                            "{} values do not form {} rows of width {}",
                            v.len(),
                            self.instance_ids.len(),
                            b.width
                        ),
                    });
                }
            } else if b.n_rows() != self.instance_ids.len() {
                return Err(Error::Block {
                    block: b.name.clone(),
                    message: format!("{} rows for {} instances", b.n_rows(), self.instance_ids.len()),
                });
            }
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn block(&self, name: &str) -> Option<&FeatureBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeaturizeOptions {
    pub weighting: WeightingConfig,
    pub degenerate: DegeneratePolicy,
    /// L2-normalize every row of every block after summation.
    pub normalize: bool,
}

enum Row {
    Dense(Vec<f64>),
    Sparse(SparseRow),
}

/// Builds the selected blocks, in canonical block order, one row per
/// instance in corpus order.
pub fn featurize_corpus(
    corpus: &Corpus,
    table: &EmbeddingTable,
    idf: &Idf,
    opts: &FeaturizeOptions,
    selection: &BTreeSet<BlockKind>,
) -> Result<FeatureMatrix> {
    if selection.is_empty() {
        return Err(Error::Config("no feature blocks selected".into()));
    }
    opts.weighting.validate()?;

    let needs_path = selection.contains(&BlockKind::EmbDep);
    let instances: Vec<&RelationInstance> = corpus
        .instances()
        .iter()
        .filter(|inst| {
            let keep = !(needs_path
                && opts.degenerate == DegeneratePolicy::SkipInstance
                && inst.dep_path_terms.is_empty());
            if !keep {
                warn!("skipping instance {} with an empty dependency path", inst.id);
            }
            keep
        })
        .collect();
    if instances.is_empty() {
        return Err(Error::Shape("no instances left to featurize".into()));
    }

    let vocab = selection
        .contains(&BlockKind::Tfidf)
        .then(|| TermVocabulary::from_corpus(corpus));
    let types = selection
        .contains(&BlockKind::EntTypes)
        .then(|| build_type_vocabulary(corpus));

    let row_results: Vec<Result<Vec<Row>>> = instances
        .par_iter()
        .map(|inst| {
            selection
                .iter()
                .map(|kind| {
                    Ok(match kind {
                        BlockKind::Tfidf => Row::Sparse(tfidf_vector(inst, vocab.as_ref().unwrap(), idf)),
                        BlockKind::EmbSum => Row::Dense(sum_embedding_vector(inst, table)),
                        BlockKind::EmbIdf => Row::Dense(idf_embedding_vector(inst, table, idf)),
                        BlockKind::EmbDep => Row::Dense(
                            if inst.dep_path_terms.is_empty()
                                && opts.degenerate == DegeneratePolicy::AllCOut
                            {
                                let c_out = opts.weighting.c_out;
                                weighted_sum(inst, table, |_| Ok(c_out))?
                            } else {
                                dep_reweighted_vector(inst, table, &opts.weighting)?
                            },
                        ),
                        BlockKind::EntTypes => Row::Sparse(entity_type_vector(inst, types.as_ref().unwrap())),
                    })
                })
                .collect()
        })
        .collect();

    let mut per_instance = Vec::with_capacity(row_results.len());
    for r in row_results {
        per_instance.push(r?);
    }

    let mut blocks = Vec::with_capacity(selection.len());
    for (b, kind) in selection.iter().enumerate() {
        let width = match kind {
            BlockKind::Tfidf => vocab.as_ref().unwrap().len(),
            BlockKind::EntTypes => types.as_ref().unwrap().len(),
            _ => table.dim(),
        };
        let mut block = match kind.sparsity() {
            Sparsity::Dense => {
                let mut values = Vec::with_capacity(per_instance.len() * width);
                for rows in &per_instance {
                    if let Row::Dense(v) = &rows[b] {
                        values.extend_from_slice(v);
                    }
                }
                FeatureBlock {
                    name: kind.as_str().to_string(),
                    width,
                    data: BlockData::Dense(values),
                }
            }
            Sparsity::Sparse => {
                let rows = per_instance
                    .iter_mut()
                    .map(|rows| match &mut rows[b] {
                        Row::Sparse(r) => std::mem::take(r),
                        Row::Dense(_) => unreachable!(),
                    })
                    .collect();
                FeatureBlock {
                    name: kind.as_str().to_string(),
                    width,
                    data: BlockData::Sparse(rows),
                }
            }
        };
        if opts.normalize {
            block.l2_normalize();
        }
        blocks.push(block);
    }

    FeatureMatrix::new(instances.iter().map(|i| i.id.clone()).collect(), blocks)
}
