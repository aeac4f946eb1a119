//! Metric report for a hand-made set of predictions, including the
//! per-entity breakdown and failed predictions.
//!
//!     cargo run --example metrics_audit

use stance_audit::labels::StanceLabel;
use stance_audit::metrics::{evaluate, ood_evaluate, MetricOptions};
use stance_audit::predictor::PredictionRecord;
use stance_audit::synthetic::synthetic_corpus;

fn main() -> anyhow::Result<()> {
    let corpus = synthetic_corpus();
    // Always answers with the sentiment-mapped stance, except that every
    // tenth item fails to parse.
    let preds: Vec<PredictionRecord> = corpus
        .examples()
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            if i % 10 == 9 {
                PredictionRecord::failed(&ex.id, "unparseable", "demo", "")
            } else {
                let label: StanceLabel = ex.sentiment.mapped_stance();
                PredictionRecord::hard(&ex.id, label, "demo", "")
            }
        })
        .collect();

    let report = evaluate(corpus.examples(), &preds, MetricOptions::default())?;
    println!(
        "bias-ssc {:.2}  rstd {:.2}  macro-f1 {:.2}  scored {}  failed {}",
        report.bias_ssc, report.rstd, report.macro_f1, report.n_scored, report.n_failed
    );
    println!("confusion (rows gold, cols predicted): {:?}", report.confusion.matrix);
    for (entity, m) in &report.per_entity_breakdown {
        println!("  {entity:<12} {m:?}");
    }

    let ood = ood_evaluate(&corpus, &preds, None, MetricOptions::default())?;
    for (entity, fold) in &ood.folds {
        println!("  held out {entity:<12} fit {} eval {} f1 {:?}", fold.fit_size, fold.eval_size, fold.macro_f1);
    }
    println!("ood mean macro-f1 {:.2}", ood.mean_macro_f1);
    Ok(())
}
