//! Regenerates the bundled synthetic corpora under `data/synthetic/`.
//!
//! Usage: `cargo run -p commentq-core --example make_synthetic [OUT_DIR]`

use std::path::PathBuf;

use commentq_core::corpus::{save_corpus, Format};
use commentq_core::synth::{bundled_generated, bundled_seed};

fn main() -> commentq_core::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/synthetic"));
    std::fs::create_dir_all(&dir).map_err(|e| commentq_core::Error::io(&dir, e))?;
    save_corpus(&bundled_seed()?, &dir.join("seed.jsonl"), Format::Jsonl)?;
    save_corpus(&bundled_generated()?, &dir.join("generated.jsonl"), Format::Jsonl)?;
    Ok(())
}
