//! Pre-trained word vectors in the plain-text format used by GloVe and
//! word2vec: `token v1 v2 ... vd` per line, with an optional `V d` header.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use log::warn;

use crate::corpus::normalize;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. The first occurrence of a
    /// token wins.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let mut table = EmbeddingTable {
            dim,
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (line, (token, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    line: line + 1,
                    expected: dim,
                    found: vector.len(),
                });
            }
            table.insert(token.into(), &vector);
        }
        Ok(table)
    }

    fn insert(&mut self, token: String, vector: &[f32]) -> bool {
        if self.index.contains_key(&token) {
            return false;
        }
        self.index.insert(token, self.data.len() / self.dim);
        self.data.extend_from_slice(vector);
        true
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Vector for `token`, looked up by its normalized form first and then
    /// verbatim. `None` for out-of-vocabulary tokens.
    pub fn lookup(&self, token: &str) -> Option<&[f32]> {
        let row = self
            .index
            .get(&normalize(token))
            .or_else(|| self.index.get(token))?;
        Some(&self.data[row * self.dim..(row + 1) * self.dim])
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(file, expected_dim).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_embeddings<R: Read>(reader: R, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    if expected_dim == Some(0) {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let mut table: Option<EmbeddingTable> = None;
    let mut header_dim = None;
    let mut vector = Vec::new();
    let mut duplicates = 0usize;

    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        vector.clear();
        for field in fields {
            let v: f32 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric component {field:?}"),
            })?;
            vector.push(v);
        }

        if table.is_none() && header_dim.is_none() && is_header(token, &vector) {
            header_dim = Some(vector[0] as usize);
            continue;
        }

        let t = table.get_or_insert_with(|| EmbeddingTable {
            dim: expected_dim.or(header_dim).unwrap_or(vector.len()),
            index: HashMap::new(),
            data: Vec::new(),
        });
        if vector.len() != t.dim || vector.is_empty() {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: t.dim,
                found: vector.len(),
            });
        }
        if !t.insert(token.to_string(), &vector) {
            duplicates += 1;
            if duplicates <= 5 {
                warn!("line {line_no}: duplicate token {token:?}, keeping first occurrence");
            }
        }
    }
    if duplicates > 5 {
        warn!("{duplicates} duplicate tokens in total");
    }

    table.ok_or_else(|| Error::Parse {
        line: 0,
        message: "embedding file contains no vectors".into(),
    })
}

fn is_header(token: &str, rest: &[f32]) -> bool {
    rest.len() == 1
        && token.parse::<u64>().is_ok()
        && rest[0] >= 1.0
        && rest[0].fract() == 0.0
}
