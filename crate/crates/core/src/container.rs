//! Binary dumps of intermediate artifacts.
//!
//! Both formats share one framing: an 8-byte little-endian header length,
//! the UTF-8 JSON header, then a little-endian payload.
//!
//! Feature matrices store each dense block as row-major `f32` values and
//! each sparse block as `(u32 row, u32 col, f32 value)` triplets, in header
//! block order. PCA models store `f64` arrays: mean, components (row-major),
//! explained variance.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{BlockData, FeatureBlock, FeatureMatrix, Sparsity};
use crate::reduce::PcaModel;

pub const FEATURES_FORMAT: &str = "relclust.features.v1";
pub const PCA_FORMAT: &str = "relclust.pca.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockManifest {
    pub name: String,
    pub width: usize,
    pub sparsity: Sparsity,
    /// Stored triplets for sparse blocks; `n_instances * width` for dense.
    pub n_values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturesHeader {
    pub format: String,
    pub n_instances: usize,
    pub instance_ids: Vec<String>,
    pub blocks: Vec<BlockManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaHeader {
    pub format: String,
    pub input_width: usize,
    pub n_components: usize,
}

fn write_header<W: Write, H: Serialize>(w: &mut W, header: &H) -> std::io::Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)
}

fn read_header<R: Read, H: DeserializeOwned>(r: &mut R) -> Result<H> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|e| Error::Container(format!("reading header length: {e}")))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 32 {
        return Err(Error::Container(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|e| Error::Container(format!("reading header: {e}")))?;
    serde_json::from_slice(&json).map_err(|e| Error::Container(format!("header: {e}")))
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Container(format!("truncated payload: {e}")))?;
    Ok(buf)
}

pub fn write_features<W: Write>(mut w: W, fm: &FeatureMatrix) -> Result<()> {
    let header = FeaturesHeader {
        format: FEATURES_FORMAT.into(),
        n_instances: fm.n_instances(),
        instance_ids: fm.instance_ids.clone(),
        blocks: fm
            .blocks
            .iter()
            .map(|b| BlockManifest {
                name: b.name.clone(),
                width: b.width,
                sparsity: b.sparsity(),
                n_values: match &b.data {
                    BlockData::Dense(v) => v.len(),
                    BlockData::Sparse(rows) => rows.iter().map(Vec::len).sum(),
                },
            })
            .collect(),
    };
    let io = |e| Error::io("<features writer>", e);
    write_header(&mut w, &header).map_err(io)?;
    for b in &fm.blocks {
        match &b.data {
            BlockData::Dense(values) => {
                for &v in values {
                    w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
                }
            }
            BlockData::Sparse(rows) => {
                for (i, row) in rows.iter().enumerate() {
                    for &(c, v) in row {
                        w.write_all(&(i as u32).to_le_bytes()).map_err(io)?;
                        w.write_all(&c.to_le_bytes()).map_err(io)?;
                        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
                    }
                }
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let header: FeaturesHeader = read_header(&mut r)?;
    if header.format != FEATURES_FORMAT {
        return Err(Error::Container(format!("unexpected format {:?}", header.format)));
    }
    if header.instance_ids.len() != header.n_instances {
        return Err(Error::Container("instance id count disagrees with n_instances".into()));
    }
    let n = header.n_instances;
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for m in &header.blocks {
        let data = match m.sparsity {
            Sparsity::Dense => {
                if m.n_values != n * m.width {
                    return Err(Error::Container(format!("block {}: bad dense size", m.name)));
                }
                let mut values = Vec::with_capacity(m.n_values);
                for _ in 0..m.n_values {
                    values.push(f64::from(f32::from_le_bytes(read_array(&mut r)?)));
                }
                BlockData::Dense(values)
            }
            Sparsity::Sparse => {
                let mut rows = vec![Vec::new(); n];
                for _ in 0..m.n_values {
                    let row = u32::from_le_bytes(read_array(&mut r)?) as usize;
                    let col = u32::from_le_bytes(read_array(&mut r)?);
                    let v = f64::from(f32::from_le_bytes(read_array(&mut r)?));
                    let slot = rows.get_mut(row).ok_or_else(|| {
                        Error::Container(format!("block {}: row {row} out of range", m.name))
                    })?;
                    slot.push((col, v));
                }
                BlockData::Sparse(rows)
            }
        };
        let block = match data {
            BlockData::Dense(v) => FeatureBlock {
                name: m.name.clone(),
                width: m.width,
                data: BlockData::Dense(v),
            },
            BlockData::Sparse(rows) => FeatureBlock::sparse(m.name.clone(), m.width, rows)?,
        };
        blocks.push(block);
    }
    FeatureMatrix::new(header.instance_ids, blocks)
}

pub fn save_features(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(BufWriter::new(f), fm)
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(BufReader::new(f))
}

pub fn write_pca<W: Write>(mut w: W, model: &PcaModel) -> Result<()> {
    let header = PcaHeader {
        format: PCA_FORMAT.into(),
        input_width: model.input_width(),
        n_components: model.n_components(),
    };
    let io = |e| Error::io("<pca writer>", e);
    write_header(&mut w, &header).map_err(io)?;
    let components = model.components();
    let values = model
        .mean()
        .iter()
        .copied()
        .chain((0..components.nrows()).flat_map(|i| components.row(i).iter().copied().collect::<Vec<_>>()))
        .chain(model.explained_variance().iter().copied());
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_pca<R: Read>(mut r: R) -> Result<PcaModel> {
    let header: PcaHeader = read_header(&mut r)?;
    if header.format != PCA_FORMAT {
        return Err(Error::Container(format!("unexpected format {:?}", header.format)));
    }
    let (p, k) = (header.input_width, header.n_components);
    let mut take = |count: usize| -> Result<Vec<f64>> {
        (0..count)
            .map(|_| read_array(&mut r).map(f64::from_le_bytes))
            .collect()
    };
    let mean = take(p)?;
    let components = take(k * p)?;
    let explained = take(k)?;
    PcaModel::from_parts(mean, components, explained)
}

pub fn save_pca(path: impl AsRef<Path>, model: &PcaModel) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_pca(BufWriter::new(f), model)
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<PcaModel> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pca(BufReader::new(f))
}
