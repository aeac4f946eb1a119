//! Regenerates the bundled corpus and lexicon under `data/`.
//!
//!     cargo run --example build_synthetic_corpus [-- <out-dir>]

use std::path::PathBuf;

use stance_audit::corpus::balance_report;
use stance_audit::synthetic::synthetic_corpus;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    std::fs::create_dir_all(&out)?;

    let corpus = synthetic_corpus();
    corpus.write_jsonl(out.join("synthetic_corpus.jsonl"))?;
    std::fs::write(out.join("lexicon.json"), corpus.lexicon().to_json() + "\n")?;

    let report = balance_report(&corpus, 0);
    println!("wrote {} examples to {}", corpus.len(), out.display());
    for (target, b) in &report.targets {
        println!("  {target:<12} {:>3} items  stance {:?}  sentiment {:?}", b.total, b.stance, b.sentiment);
    }
    Ok(())
}
