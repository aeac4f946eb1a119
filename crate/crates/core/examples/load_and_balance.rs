//! Loads the bundled corpus, prints per-target balance and an agreement
//! score for a small made-up annotation set.
//!
//!     cargo run --example load_and_balance

use std::path::Path;

use stance_audit::corpus::{balance_report, fleiss_kappa, load_corpus, AnnotationSet};
use stance_audit::labels::StanceLabel::{Against, Neutral, Support};

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let corpus = load_corpus(data.join("synthetic_corpus.jsonl"), data.join("lexicon.json"))?;
    println!("{} examples, {} entities", corpus.len(), corpus.lexicon().len());

    let report = balance_report(&corpus, 0);
    println!("balanced: {} (equal totals: {})", report.balanced, report.totals_equal);
    for (target, b) in &report.targets {
        println!("  {target:<12} stance {:?}  sentiment {:?}", b.stance, b.sentiment);
        for (label, row) in ["support", "against", "neutral"].iter().zip(b.joint) {
            println!("    {label:<8} x sentiment {row:?}");
        }
    }

    let annotations = AnnotationSet::from_items(vec![
        ("a".into(), vec![Support, Support, Support]),
        ("b".into(), vec![Against, Against, Neutral]),
        ("c".into(), vec![Neutral, Neutral, Neutral]),
        ("d".into(), vec![Support, Against, Support]),
    ])?;
    println!("fleiss kappa over 4 items, 3 annotators: {:.3}", fleiss_kappa(&annotations)?);
    Ok(())
}
