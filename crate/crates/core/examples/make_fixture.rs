//! Regenerates the bundled synthetic fixture:
//!
//!     cargo run -p relclust --example make_fixture -- crates/core/fixtures

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use relclust::synthetic::{generate, SyntheticSpec};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let data = generate(&SyntheticSpec::default());
    data.write_corpus(BufWriter::new(File::create(dir.join("synthetic_corpus.jsonl"))?))?;
    data.write_embeddings(BufWriter::new(File::create(dir.join("synthetic_embeddings.txt"))?))?;
    println!("wrote {} instances, {} vectors to {}", data.instances.len(), data.embeddings.len(), dir.display());
    Ok(())
}
