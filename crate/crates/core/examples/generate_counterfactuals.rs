//! Swaps the target of one example for every other entity and shows the
//! edited spans.
//!
//!     cargo run --example generate_counterfactuals

use stance_audit::counterfactual::{augment_corpus, generate_counterfactual_set};
use stance_audit::synthetic::synthetic_corpus;

fn main() -> anyhow::Result<()> {
    let corpus = synthetic_corpus();
    let lexicon = corpus.lexicon();

    for id in ["pita_001", "paetongtarn_002"] {
        let ex = corpus.get(id).expect("bundled id");
        let set = generate_counterfactual_set(ex, lexicon)?;
        println!("{} [{}]: {}", ex.id, ex.target_id, ex.text);
        for v in &set.variants {
            let spans: Vec<String> = v
                .edited_spans
                .iter()
                .zip(&v.variant_spans)
                .map(|(a, b)| format!("{}->{}", a.matched_alias, b.matched_alias))
                .collect();
            println!("  {} [{}]: {}", v.example.id, v.swapped_to, v.example.text);
            println!("    edits: {}", spans.join(", "));
        }
    }

    let aug = augment_corpus(&corpus)?;
    println!(
        "augmented corpus: {} examples ({} originals, {} skipped)",
        aug.corpus.len(),
        aug.sets.len(),
        aug.skipped.len()
    );
    Ok(())
}
