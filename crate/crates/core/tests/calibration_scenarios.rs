use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;

use stance_audit::calibration::{
    calibrate, consensus_fallback, fit_calibrator, CalibrationContext, CalibratorModel, FoldFitter, Method,
    PredictionIndex, TrainConfig, Weights, FEATURE_DIM,
};
use stance_audit::corpus::{Corpus, Example};
use stance_audit::counterfactual::{augment_corpus, find_entity_spans, generate_counterfactual_set};
use stance_audit::labels::{SentimentLabel, StanceLabel};
use stance_audit::metrics::{evaluate, ood_evaluate, MetricOptions};
use stance_audit::predictor::{index_predictions, PredictionRecord};
use stance_audit::simulator::{simulate_batch, EntityBias, SimulatorConfig};
use stance_audit::synthetic::synthetic_corpus;
use stance_audit::text::graphemes;

fn fixture() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(synthetic_corpus)
}

fn label_of(r: &PredictionRecord) -> StanceLabel {
    r.argmax().expect("scored")
}

/// Accurate everywhere except two fixed entity preferences: every pita
/// item is predicted support and every thaksin item against.
fn preference_only_predictions(aug: &Corpus) -> Vec<PredictionRecord> {
    let mut cfg = SimulatorConfig {
        leakage_rate: 0.0,
        base_accuracy: 1.0,
        seed: 9,
        ..Default::default()
    };
    cfg.entity_bias.insert("pita".into(), EntityBias { label: StanceLabel::Support, rate: 1.0 });
    cfg.entity_bias.insert("thaksin".into(), EntityBias { label: StanceLabel::Against, rate: 1.0 });
    simulate_batch(aug.examples(), &cfg).unwrap()
}

/// The calibrator is fitted on data that shows the preference (the usual
/// post-hoc setting). A fold that holds out a fully preferred entity cannot
/// learn it; see `held_out_preference_is_not_recovered`.
#[test]
fn split_votes_on_a_preferred_entity_resolve_to_neutral() {
    let corpus = fixture();
    let aug = augment_corpus(corpus).unwrap();
    let preds = preference_only_predictions(&aug.corpus);
    let ctx = CalibrationContext::new(aug.sets.clone(), preds.clone(), corpus.lexicon().clone(), None);
    let model = fit_calibrator(&ctx, corpus.examples(), &TrainConfig::default(), 0.75).unwrap();
    let calibrated = ctx.calibrate_examples(corpus.examples(), Some(&model), 0.75).unwrap();
    let by_id = index_predictions(&calibrated);
    let raw = index_predictions(&preds);

    // Positive tone, no stance: the raw predictor says support because of
    // the entity; its variants say against and neutral.
    let split: Vec<&Example> = corpus
        .examples()
        .iter()
        .filter(|e| e.target_id == "pita" && e.stance == StanceLabel::Neutral && e.sentiment == SentimentLabel::Positive)
        .collect();
    assert_eq!(split.len(), 10);
    for ex in split {
        assert_eq!(label_of(raw[ex.id.as_str()]), StanceLabel::Support);
        let votes: Vec<StanceLabel> = aug.sets.iter().find(|s| s.original.id == ex.id).unwrap().variants.iter()
            .map(|v| label_of(raw[v.example.id.as_str()]))
            .collect();
        assert_eq!(votes.len(), 2);
        assert!(votes.contains(&StanceLabel::Against) && votes.contains(&StanceLabel::Neutral), "{votes:?}");
        assert_eq!(label_of(by_id[ex.id.as_str()]), StanceLabel::Neutral, "{}", ex.id);
    }

    let raw_report = evaluate(corpus.examples(), &preds, MetricOptions::default()).unwrap();
    let cal_report = evaluate(corpus.examples(), &calibrated, MetricOptions::default()).unwrap();
    assert!(raw_report.macro_f1 < 80.0);
    assert_eq!(cal_report.macro_f1, 100.0);
    assert_eq!(cal_report.rstd, 0.0);
    for m in cal_report.per_entity_breakdown.values() {
        assert_eq!(m.recalls, Some([100.0; 3]));
    }
}

/// Documents a limit: when the held-out entity is the only one with a given
/// preference, the fold's re-scorer falls back on the base label.
#[test]
fn held_out_preference_is_not_recovered() {
    let corpus = fixture();
    let aug = augment_corpus(corpus).unwrap();
    let preds = preference_only_predictions(&aug.corpus);
    let ctx = CalibrationContext::new(aug.sets.clone(), preds.clone(), corpus.lexicon().clone(), None);
    let fitter = FoldFitter {
        ctx: &ctx,
        method: Method::Trained(TrainConfig::default()),
        tau: 0.75,
    };
    let ood = ood_evaluate(corpus, &preds, Some(&fitter), MetricOptions::default()).unwrap();
    assert_eq!(ood.folds["paetongtarn"].macro_f1, Some(100.0));
    assert!(ood.folds["pita"].macro_f1.unwrap() < 50.0);
}

/// Text with the target's mentions and pronouns blanked out.
fn skeleton(ex: &Example, corpus: &Corpus) -> String {
    let spans = find_entity_spans(&ex.text, corpus.lexicon(), &ex.target_id).unwrap();
    let g = graphemes(&ex.text);
    let mut out = String::new();
    let mut cursor = 0;
    for s in spans {
        out.push_str(&g[cursor..s.start].concat());
        out.push_str("<E>");
        cursor = s.end;
    }
    out.push_str(&g[cursor..].concat());
    out
}

/// A predictor that only sees the skeleton: it leaks sentiment on some
/// skeletons and errs on others, the same way for every entity.
fn skeleton_predictions(aug: &Corpus) -> Vec<PredictionRecord> {
    aug.examples()
        .iter()
        .map(|ex| {
            let h = stance_audit::predictor::prompt_hash(&skeleton(ex, aug));
            let byte = u8::from_str_radix(&h[..2], 16).unwrap();
            let label = match byte % 10 {
                0..=3 => ex.sentiment.mapped_stance(),
                4 => StanceLabel::ALL[(ex.stance.index() + 1) % 3],
                _ => ex.stance,
            };
            PredictionRecord::hard(&ex.id, label, "skeleton", h)
        })
        .collect()
}

#[test]
fn mirrored_entities_get_equal_recall_after_calibration() {
    let corpus = synthetic_corpus();
    for i in 1..=90 {
        let (a, b) = (corpus.get(&format!("pita_{i:03}")).unwrap(), corpus.get(&format!("thaksin_{i:03}")).unwrap());
        assert_eq!(skeleton(a, &corpus), skeleton(b, &corpus));
        assert_eq!((a.stance, a.sentiment), (b.stance, b.sentiment));
    }
    let mirrored = corpus.filter(|e| e.target_id != "paetongtarn");
    let aug = augment_corpus(&corpus).unwrap();
    let preds = skeleton_predictions(&aug.corpus);
    let ctx = CalibrationContext::new(aug.sets.clone(), preds, corpus.lexicon().clone(), None);
    for seed in 0..3 {
        let config = TrainConfig { seed, ..Default::default() };
        let model = fit_calibrator(&ctx, mirrored.examples(), &config, 0.75).unwrap();
        let calibrated = ctx.calibrate_examples(mirrored.examples(), Some(&model), 0.75).unwrap();
        let report = evaluate(mirrored.examples(), &calibrated, MetricOptions::default()).unwrap();
        let (p, t) = (
            report.per_entity_breakdown["pita"].recalls.unwrap(),
            report.per_entity_breakdown["thaksin"].recalls.unwrap(),
        );
        for k in 0..3 {
            assert!((p[k] - t[k]).abs() < 1.0, "seed {seed}: {p:?} vs {t:?}");
        }
    }
}

fn one_set_predictions(labels: [usize; 3]) -> (stance_audit::counterfactual::CounterfactualSet, Vec<PredictionRecord>) {
    let corpus = fixture();
    let set = generate_counterfactual_set(corpus.get("pita_001").unwrap(), corpus.lexicon()).unwrap();
    let ids = std::iter::once(&set.original.id).chain(set.variants.iter().map(|v| &v.example.id));
    let preds = ids
        .zip(labels)
        .map(|(id, l)| match StanceLabel::ALL.get(l) {
            Some(&label) => PredictionRecord::hard(id, label, "t", ""),
            None => PredictionRecord::failed(id, "x", "t", ""),
        })
        .collect();
    (set, preds)
}

proptest! {
    #[test]
    fn consensus_ignores_variant_order(labels in prop::array::uniform3(0usize..4), tau in 0.51f64..=1.0) {
        prop_assume!(labels[0] < 3);
        let (set, preds) = one_set_predictions(labels);
        let index: PredictionIndex = index_predictions(&preds);
        let mut reversed = set.clone();
        reversed.variants.reverse();
        prop_assert_eq!(consensus_fallback(&set, &index, tau), consensus_fallback(&reversed, &index, tau));
    }

    #[test]
    fn calibrated_output_is_a_distribution(
        weights in prop::collection::vec(-40.0f64..40.0, 3 * FEATURE_DIM),
        labels in prop::array::uniform3(0usize..3),
    ) {
        let (set, preds) = one_set_predictions(labels);
        let index = index_predictions(&preds);
        let mut model = CalibratorModel::uniform(0.75);
        model.weights = Weights::from_rows(&weights.chunks(FEATURE_DIM).map(<[f64]>::to_vec).collect::<Vec<_>>());
        let corpus = fixture();
        let out = calibrate(&set, &index, &model, corpus.lexicon(), None).unwrap();
        let d = out.distribution().unwrap();
        prop_assert!(d.iter().all(|&p| p >= 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn consensus_rule_through_folds() {
    let corpus = synthetic_corpus();
    let aug = augment_corpus(&corpus).unwrap();
    let preds = preference_only_predictions(&aug.corpus);
    let ctx = CalibrationContext::new(aug.sets.clone(), preds.clone(), corpus.lexicon().clone(), None);
    let fitter = FoldFitter { ctx: &ctx, method: Method::Consensus, tau: 0.6 };
    let ood = ood_evaluate(&corpus, &preds, Some(&fitter), MetricOptions::default()).unwrap();
    let mut backends = BTreeMap::new();
    for r in ood.pooled_predictions() {
        *backends.entry(r.backend.clone()).or_insert(0) += 1;
    }
    assert_eq!(backends.len(), 1);
    assert_eq!(backends.values().sum::<usize>(), 270);
}
