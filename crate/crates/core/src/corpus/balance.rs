use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Corpus;

/// Label counts for one target. Arrays follow the fixed label order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetBalance {
    pub total: usize,
    pub stance: [usize; 3],
    pub sentiment: [usize; 3],
    /// Informational only: `joint[stance][sentiment]`.
    pub joint: [[usize; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImbalanceFlag {
    pub target_id: String,
    pub layer: String,
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub total: usize,
    pub tolerance: usize,
    pub balanced: bool,
    /// Whether every lexicon entity has the same number of examples.
    pub totals_equal: bool,
    pub targets: BTreeMap<String, TargetBalance>,
    pub flags: Vec<ImbalanceFlag>,
}

fn spread(counts: &[usize; 3]) -> usize {
    counts.iter().max().unwrap() - counts.iter().min().unwrap()
}

/// Marginal balance per target. A target is flagged when its stance or
/// sentiment counts differ by more than `tolerance`.
pub fn balance_report(corpus: &Corpus, tolerance: usize) -> BalanceReport {
    let mut targets: BTreeMap<String, TargetBalance> = corpus
        .lexicon()
        .ids()
        .map(|id| (id.to_string(), TargetBalance::default()))
        .collect();
    for ex in corpus.examples() {
        let t = targets.entry(ex.target_id.clone()).or_default();
        t.total += 1;
        t.stance[ex.stance.index()] += 1;
        t.sentiment[ex.sentiment.index()] += 1;
        t.joint[ex.stance.index()][ex.sentiment.index()] += 1;
    }

    let mut flags = Vec::new();
    for (id, t) in &targets {
        for (layer, counts) in [("stance", &t.stance), ("sentiment", &t.sentiment)] {
            if spread(counts) > tolerance {
                flags.push(ImbalanceFlag {
                    target_id: id.clone(),
                    layer: layer.to_string(),
                    counts: *counts,
                });
            }
        }
    }
    let totals: Vec<usize> = targets.values().map(|t| t.total).collect();
    BalanceReport {
        total: corpus.len(),
        tolerance,
        balanced: flags.is_empty(),
        totals_equal: totals.windows(2).all(|w| w[0] == w[1]),
        targets,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityEntry, Example, Lexicon, Pronouns, Provenance};
    use crate::labels::{SentimentLabel, StanceLabel};

    fn corpus(per_target: &[(&str, usize)]) -> Corpus {
        let entries = per_target
            .iter()
            .map(|(id, _)| EntityEntry {
                entity_id: id.to_string(),
                canonical: id.to_string(),
                aliases: vec![id.to_string()],
                pronouns: Pronouns {
                    subject: "he".into(),
                    object: "him".into(),
                    possessive: "his".into(),
                },
                party: None,
            })
            .collect();
        let lexicon = Lexicon::new(entries).unwrap();
        let mut examples = Vec::new();
        for (id, n) in per_target {
            for i in 0..*n {
                examples.push(Example {
                    id: format!("{id}-{i}"),
                    text: format!("{id} text {i}"),
                    target_id: id.to_string(),
                    stance: StanceLabel::ALL[i % 3],
                    sentiment: SentimentLabel::ALL[(i / 3) % 3],
                    rationale: None,
                    bias_markers: None,
                    provenance: Provenance::Original,
                    source_id: None,
                    stance_unverified: false,
                });
            }
        }
        Corpus::new(examples, lexicon).unwrap()
    }

    #[test]
    fn empty_corpus_is_vacuously_balanced() {
        let report = balance_report(&corpus(&[("a", 0), ("b", 0)]), 0);
        assert!(report.balanced);
        assert_eq!(report.total, 0);
        assert!(report.targets.values().all(|t| t.total == 0));
    }

    #[test]
    fn fully_balanced_targets() {
        let report = balance_report(&corpus(&[("pita", 90), ("thaksin", 90), ("paetongtarn", 90)]), 0);
        assert!(report.balanced);
        assert!(report.totals_equal);
        assert_eq!(report.total, 270);
        for t in report.targets.values() {
            assert_eq!(t.stance, [30, 30, 30]);
            assert_eq!(t.sentiment, [30, 30, 30]);
            assert!(t.joint.iter().flatten().all(|&c| c == 10));
        }
    }

    #[test]
    fn uneven_target_is_named() {
        let report = balance_report(&corpus(&[("pita", 90), ("thaksin", 90), ("paetongtarn", 91)]), 0);
        assert!(!report.balanced);
        assert!(!report.totals_equal);
        assert!(report.flags.iter().all(|f| f.target_id == "paetongtarn"));
        assert!(report.flags.iter().any(|f| f.layer == "stance" && f.counts == [31, 30, 30]));
        // a tolerance of one count absorbs the extra example
        assert!(balance_report(&corpus(&[("pita", 90), ("paetongtarn", 91)]), 1).balanced);
    }
}
