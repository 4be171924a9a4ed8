//! Unsupervised open relation extraction.
//!
//! Relation instances (an entity pair in a sentence, with the terms on the
//! dependency path between them) are turned into feature blocks, sparse
//! blocks are reduced one at a time with PCA, the concatenated vectors are
//! clustered with Ward-linkage HAC, and clusters are scored against gold
//! relation labels with pairwise F1.
//!
//! ```no_run
//! use relclust::pipeline::{run_pipeline, RunConfig};
//!
//! let cfg = RunConfig {
//!     corpus: "corpus.jsonl".into(),
//!     embeddings: "glove.100d.txt".into(),
//!     ..Default::default()
//! };
//! let out = run_pipeline(&cfg)?;
//! if let Some(report) = out.result.report {
//!     println!("pairwise F1 = {:.3}", report.f1);
//! }
//! # Ok::<(), relclust::Error>(())
//! ```

pub mod cluster;
pub mod container;
pub mod corpus;
pub mod embeddings;
mod error;
pub mod evaluate;
pub mod featurize;
pub mod pipeline;
pub mod reduce;
pub mod synthetic;

pub use error::{Error, Result};
