//! Annotated relation instances and corpus statistics.
//!
//! The corpus file is JSON lines, one relation instance per line:
//!
//! ```text
//! {"id": "s1", "tokens": ["Bowie", "was", "born", "in", "London"],
//!  "dep_path": ["born", "in"],
//!  "head": {"surface": "Bowie", "start": 0, "end": 1, "kb_types": ["Person"], "ner_tag": "PERSON"},
//!  "tail": {"surface": "London", "start": 4, "end": 5, "kb_types": [], "ner_tag": "LOCATION"},
//!  "gold": "birthPlace"}
//! ```
//!
//! Unknown fields are ignored with a warning. Blank lines are skipped.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Vocabulary normalization applied to tokens before counting or lookup.
pub fn normalize(token: &str) -> String {
    token.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    #[serde(default)]
    pub kb_types: Vec<String>,
    pub ner_tag: String,
}

impl EntityMention {
    fn overlaps(&self, other: &EntityMention) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInstance {
    pub id: String,
    pub tokens: Vec<String>,
    /// Terms on the lexicalized dependency path between the two mentions.
    #[serde(rename = "dep_path")]
    pub dep_path_terms: BTreeSet<String>,
    pub head: EntityMention,
    pub tail: EntityMention,
    #[serde(default)]
    pub gold: Option<String>,
}

impl RelationInstance {
    /// Normalized path terms. Its length is |D|.
    pub fn path_set(&self) -> HashSet<String> {
        self.dep_path_terms.iter().map(|t| normalize(t)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidInstance {
                id: self.id.clone(),
                message,
            })
        };
        if self.tokens.len() < 2 {
            return fail(format!(
                "sentence has {} token(s), at least 2 required",
                self.tokens.len()
            ));
        }
        for (role, mention) in [("head", &self.head), ("tail", &self.tail)] {
            if mention.start >= mention.end {
                return fail(format!(
                    "{role} span [{}, {}) is empty",
                    mention.start, mention.end
                ));
            }
            if mention.end > self.tokens.len() {
                return fail(format!(
                    "{role} span [{}, {}) exceeds {} tokens",
                    mention.start,
                    mention.end,
                    self.tokens.len()
                ));
            }
            let mut seen = HashSet::new();
            for t in &mention.kb_types {
                if !seen.insert(t.as_str()) {
                    return fail(format!("{role} kb_types lists {t:?} twice"));
                }
            }
        }
        if self.head.overlaps(&self.tail) {
            return fail("head and tail spans overlap".to_string());
        }
        let vocab: HashSet<String> = self.tokens.iter().map(|t| normalize(t)).collect();
        if let Some(missing) = self
            .dep_path_terms
            .iter()
            .find(|t| !vocab.contains(&normalize(t)))
        {
            return fail(format!(
                "dependency path term {missing:?} does not occur in the sentence"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    instances: Vec<RelationInstance>,
    doc_freq: BTreeMap<String, usize>,
}

impl Corpus {
    /// Validates every instance and computes document frequencies.
    pub fn new(instances: Vec<RelationInstance>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(instances.len());
        for inst in &instances {
            inst.validate()?;
            if !ids.insert(inst.id.as_str()) {
                return Err(Error::InvalidInstance {
                    id: inst.id.clone(),
                    message: "duplicate instance id".to_string(),
                });
            }
        }
        let mut doc_freq = BTreeMap::new();
        for inst in &instances {
            let distinct: BTreeSet<String> = inst.tokens.iter().map(|t| normalize(t)).collect();
            for t in distinct {
                *doc_freq.entry(t).or_insert(0) += 1;
            }
        }
        Ok(Corpus {
            instances,
            doc_freq,
        })
    }

    pub fn instances(&self) -> &[RelationInstance] {
        &self.instances
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    /// Number of instances containing each normalized token.
    pub fn doc_freq(&self) -> &BTreeMap<String, usize> {
        &self.doc_freq
    }

    /// Normalized vocabulary in lexicographic order.
    pub fn vocabulary(&self) -> Vec<String> {
        self.doc_freq.keys().cloned().collect()
    }

    /// Instance id → gold label, for labeled instances only.
    pub fn gold_labels(&self) -> BTreeMap<String, String> {
        self.instances
            .iter()
            .filter_map(|i| i.gold.as_ref().map(|g| (i.id.clone(), g.clone())))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut writer, inst)
                .map_err(|e| Error::Shape(format!("serializing {}: {e}", inst.id)))?;
            writer
                .write_all(b"\n")
                .map_err(|e| Error::io("<corpus writer>", e))?;
        }
        Ok(())
    }
}

const INSTANCE_FIELDS: &[&str] = &["id", "tokens", "dep_path", "head", "tail", "gold"];
const MENTION_FIELDS: &[&str] = &["surface", "start", "end", "kb_types", "ner_tag"];

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus<R: Read>(reader: R) -> Result<Corpus> {
    let mut instances = Vec::new();
    let mut warned: HashSet<String> = HashSet::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        warn_unknown_fields(&value, line_no, &mut warned);
        let inst: RelationInstance = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        instances.push(inst);
    }
    Corpus::new(instances)
}

fn warn_unknown_fields(value: &Value, line: usize, warned: &mut HashSet<String>) {
    let Some(obj) = value.as_object() else {
        return;
    };
    let mut report = |field: String| {
        if warned.insert(field.clone()) {
            warn!("line {line}: ignoring unknown field {field:?}");
        }
    };
    for key in obj.keys() {
        if !INSTANCE_FIELDS.contains(&key.as_str()) {
            report(key.clone());
        }
    }
    for role in ["head", "tail"] {
        if let Some(m) = obj.get(role).and_then(Value::as_object) {
            for key in m.keys() {
                if !MENTION_FIELDS.contains(&key.as_str()) {
                    report(format!("{role}.{key}"));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdfScheme {
    /// ln((1 + N) / (1 + df)) + 1
    #[default]
    Smoothed,
    /// ln(N / df)
    Plain,
}

/// Inverse document frequencies over normalized tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Idf {
    weights: BTreeMap<String, f64>,
    unseen: f64,
}

impl Idf {
    pub fn from_weights(weights: BTreeMap<String, f64>, unseen: f64) -> Self {
        Idf { weights, unseen }
    }

    /// Weight for a raw token; tokens outside the corpus vocabulary get the
    /// scheme's unseen-token value.
    pub fn weight(&self, token: &str) -> f64 {
        self.weights
            .get(&normalize(token))
            .copied()
            .unwrap_or(self.unseen)
    }

    pub fn get(&self, normalized: &str) -> Option<f64> {
        self.weights.get(normalized).copied()
    }

    pub fn unseen(&self) -> f64 {
        self.unseen
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn compute_idf(corpus: &Corpus) -> Idf {
    compute_idf_with(corpus, IdfScheme::Smoothed)
}

pub fn compute_idf_with(corpus: &Corpus, scheme: IdfScheme) -> Idf {
    let n = corpus.n_instances() as f64;
    let formula = |df: f64| match scheme {
        IdfScheme::Smoothed => ((1.0 + n) / (1.0 + df)).ln() + 1.0,
        IdfScheme::Plain => (n / df).ln(),
    };
    let weights = corpus
        .doc_freq()
        .iter()
        .map(|(t, &df)| (t.clone(), formula(df as f64)))
        .collect();
    let unseen = match scheme {
        IdfScheme::Smoothed => formula(0.0),
        // ln(N / 0) diverges; treat an unseen token as a singleton.
        IdfScheme::Plain => formula(1.0),
    };
    Idf { weights, unseen }
}
