use std::collections::BTreeSet;

use proptest::prelude::*;

use stance_audit::corpus::{balance_report, leave_one_entity_out_split, Corpus};
use stance_audit::synthetic::{synthetic_corpus, synthetic_corpus_with};

fn subset(per_cell: usize, mask: &[bool]) -> Corpus {
    let full = synthetic_corpus_with(per_cell);
    let mut i = 0;
    full.filter(|_| {
        i += 1;
        mask[(i - 1) % mask.len()]
    })
}

#[test]
fn bundled_corpus_round_trips() {
    let corpus = synthetic_corpus();
    let jsonl = corpus.to_jsonl();
    let reloaded = Corpus::from_reader(jsonl.as_bytes(), corpus.lexicon().clone()).unwrap();
    assert_eq!(reloaded.examples(), corpus.examples());
    assert_eq!(reloaded.to_jsonl(), jsonl);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialized_subsets_reload_identically(per_cell in 1usize..3, mask in prop::collection::vec(any::<bool>(), 1..40)) {
        let corpus = subset(per_cell, &mask);
        let reloaded = Corpus::from_reader(corpus.to_jsonl().as_bytes(), corpus.lexicon().clone()).unwrap();
        prop_assert_eq!(reloaded.examples(), corpus.examples());
    }

    #[test]
    fn balance_counts_add_up(per_cell in 1usize..3, mask in prop::collection::vec(any::<bool>(), 1..40)) {
        let corpus = subset(per_cell, &mask);
        let report = balance_report(&corpus, 0);
        prop_assert_eq!(report.targets.values().map(|t| t.total).sum::<usize>(), corpus.len());
        for t in report.targets.values() {
            prop_assert_eq!(t.stance.iter().sum::<usize>(), t.total);
            prop_assert_eq!(t.sentiment.iter().sum::<usize>(), t.total);
        }
    }

    #[test]
    fn entity_holdouts_partition_the_corpus(per_cell in 1usize..3, mask in prop::collection::vec(any::<bool>(), 1..40)) {
        let corpus = subset(per_cell, &mask);
        let mut seen = BTreeSet::new();
        for entity in corpus.lexicon().ids() {
            let (fit, eval) = leave_one_entity_out_split(&corpus, entity).unwrap();
            prop_assert_eq!(fit.len() + eval.len(), corpus.len());
            let fit_ids: BTreeSet<_> = fit.examples().iter().map(|e| e.id.clone()).collect();
            for e in eval.examples() {
                prop_assert!(!fit_ids.contains(&e.id));
                prop_assert!(seen.insert(e.id.clone()), "{} held out twice", e.id);
            }
        }
        let all: BTreeSet<_> = corpus.examples().iter().map(|e| e.id.clone()).collect();
        prop_assert_eq!(seen, all);
    }
}
