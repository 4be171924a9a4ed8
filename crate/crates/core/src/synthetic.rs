//! Synthetic relation corpora with known structure.
//!
//! Each relation owns a few trigger words whose vectors sit near a
//! relation-specific center; the dependency path of every sentence is one
//! trigger word plus a preposition. Everything off the path is noise: high
//! frequency function words with large random vectors, rarer filler words,
//! and entity names. The bundled fixture under `fixtures/` was produced by
//! [`generate`] with [`SyntheticSpec::default`].

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{EntityMention, RelationInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_instances: usize,
    pub n_relations: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_instances: 200,
            n_relations: 4,
            dim: 16,
            seed: 20170528,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub instances: Vec<RelationInstance>,
    /// Sorted by token.
    pub embeddings: Vec<(String, Vec<f32>)>,
}

struct RelationTemplate {
    label: &'static str,
    triggers: &'static [&'static str],
    tail_ner: &'static str,
    tail_kb: &'static str,
}

const TEMPLATES: &[RelationTemplate] = &[
    RelationTemplate {
        label: "birthPlace",
        triggers: &["born", "native", "hometown"],
        tail_ner: "LOCATION",
        tail_kb: "Place",
    },
    RelationTemplate {
        label: "founder",
        triggers: &["founded", "established", "created"],
        tail_ner: "ORGANIZATION",
        tail_kb: "Organisation",
    },
    RelationTemplate {
        label: "spouse",
        triggers: &["married", "wed", "wife"],
        tail_ner: "PERSON",
        tail_kb: "Person",
    },
    RelationTemplate {
        label: "employer",
        triggers: &["works", "employed", "hired"],
        tail_ner: "ORGANIZATION",
        tail_kb: "Organisation",
    },
];

const FUNCTION_WORDS: &[&str] = &["the", "a", "and", "said", "that", "was", "has", "also", "for", "on"];
const PREPOSITIONS: &[&str] = &["in", "by", "to", "at"];

fn random_vector(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * norm / len).collect()
}

fn round_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let mut vectors: BTreeMap<String, Vec<f32>> = BTreeMap::new();

    let relations: Vec<(String, Vec<String>, &RelationTemplate)> = (0..spec.n_relations)
        .map(|r| {
            let t = &TEMPLATES[r % TEMPLATES.len()];
            let suffix = if r < TEMPLATES.len() { String::new() } else { format!("_{}", r / TEMPLATES.len()) };
            let triggers = t.triggers.iter().map(|w| format!("{w}{suffix}")).collect();
            (format!("{}{suffix}", t.label), triggers, t)
        })
        .collect();
    for (_, triggers, _) in &relations {
        let center = random_vector(&mut rng, dim, 3.0);
        for w in triggers {
            let jitter = random_vector(&mut rng, dim, 0.3);
            let v: Vec<f64> = center.iter().zip(&jitter).map(|(c, j)| c + j).collect();
            vectors.insert(w.clone(), round_f32(&v));
        }
    }
    for w in FUNCTION_WORDS {
        vectors.insert(w.to_string(), round_f32(&random_vector(&mut rng, dim, 3.0)));
    }
    for w in PREPOSITIONS {
        vectors.insert(w.to_string(), round_f32(&random_vector(&mut rng, dim, 0.3)));
    }
    let fillers: Vec<String> = (0..60).map(|i| format!("filler{i:02}")).collect();
    for w in &fillers {
        vectors.insert(w.clone(), round_f32(&random_vector(&mut rng, dim, 1.0)));
    }
    let people: Vec<String> = (0..40).map(|i| format!("Person{i:02}")).collect();
    let places: Vec<String> = (0..20).map(|i| format!("City{i:02}")).collect();
    let orgs: Vec<String> = (0..20).map(|i| format!("Org{i:02}")).collect();
    for name in people.iter().chain(&places).chain(&orgs) {
        vectors.insert(name.to_lowercase(), round_f32(&random_vector(&mut rng, dim, 1.0)));
    }

    let mut order: Vec<usize> = (0..spec.n_instances).map(|i| i % spec.n_relations.max(1)).collect();
    order.shuffle(&mut rng);

    let mut instances = Vec::with_capacity(spec.n_instances);
    for (i, &r) in order.iter().enumerate() {
        let (label, triggers, template) = &relations[r];
        let head = people.choose(&mut rng).unwrap().clone();
        let tail = match template.tail_ner {
            "LOCATION" => places.choose(&mut rng).unwrap(),
            "PERSON" => people.iter().filter(|p| **p != head).collect::<Vec<_>>().choose(&mut rng).copied().unwrap(),
            _ => orgs.choose(&mut rng).unwrap(),
        }
        .clone();
        let trigger = triggers.choose(&mut rng).unwrap().clone();
        let prep = PREPOSITIONS.choose(&mut rng).unwrap().to_string();

        let n_function = rng.random_range(3..=6);
        let n_filler = rng.random_range(0..=2);
        let mut middle: Vec<String> = Vec::with_capacity(n_function + n_filler + 2);
        for _ in 0..n_function {
            middle.push(FUNCTION_WORDS.choose(&mut rng).unwrap().to_string());
        }
        for _ in 0..n_filler {
            middle.push(fillers.choose(&mut rng).unwrap().clone());
        }
        middle.shuffle(&mut rng);
        let at = rng.random_range(0..=middle.len());
        middle.splice(at..at, [trigger.clone(), prep.clone()]);

        let mut tokens = vec![head.clone()];
        tokens.extend(middle);
        tokens.push(tail.clone());
        let n = tokens.len();
        instances.push(RelationInstance {
            id: format!("syn{i:04}"),
            tokens,
            dep_path_terms: [trigger, prep].into_iter().collect(),
            head: EntityMention {
                surface: head,
                start: 0,
                end: 1,
                kb_types: vec!["Person".into()],
                ner_tag: "PERSON".into(),
            },
            tail: EntityMention {
                surface: tail,
                start: n - 1,
                end: n,
                kb_types: vec![template.tail_kb.to_string()],
                ner_tag: template.tail_ner.to_string(),
            },
            gold: Some(label.clone()),
        });
    }

    SyntheticData {
        instances,
        embeddings: vectors.into_iter().collect(),
    }
}

impl SyntheticData {
    pub fn write_corpus<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for inst in &self.instances {
            serde_json::to_writer(&mut w, inst)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn write_embeddings<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (token, v) in &self.embeddings {
            write!(w, "{token}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }
}
