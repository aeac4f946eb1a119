//! Fits the re-scorer on simulator output, saves it, and compares raw
//! predictions with out-of-fold calibrated ones.
//!
//!     cargo run --example calibrate

use stance_audit::calibration::{fit_calibrator, CalibrationContext, CalibratorModel, FoldFitter, Method, TrainConfig};
use stance_audit::counterfactual::augment_corpus;
use stance_audit::labels::StanceLabel;
use stance_audit::metrics::{evaluate, ood_evaluate, MetricOptions};
use stance_audit::simulator::{simulate_batch, EntityBias, SimulatorConfig};
use stance_audit::synthetic::synthetic_corpus;

fn main() -> anyhow::Result<()> {
    let corpus = synthetic_corpus();
    let aug = augment_corpus(&corpus)?;
    let mut sim = SimulatorConfig {
        leakage_rate: 0.5,
        seed: 1,
        ..Default::default()
    };
    sim.entity_bias.insert(
        "thaksin".into(),
        EntityBias {
            label: StanceLabel::Against,
            rate: 0.6,
        },
    );
    let preds = simulate_batch(aug.corpus.examples(), &sim)?;
    let options = MetricOptions::default();

    let raw = evaluate(corpus.examples(), &preds, options)?;
    let raw_ood = ood_evaluate(&corpus, &preds, None, options)?;

    let ctx = CalibrationContext::new(aug.sets.clone(), preds, corpus.lexicon().clone(), None);
    let config = TrainConfig::default();
    let fitter = FoldFitter {
        ctx: &ctx,
        method: Method::Trained(config),
        tau: 0.75,
    };
    let ood = ood_evaluate(&corpus, &[], Some(&fitter), options)?;
    let cal = evaluate(corpus.examples(), &ood.pooled_predictions(), options)?;

    println!("{:<12} {:>6} {:>6} {:>6} {:>6}", "", "SSC", "RStd", "F1", "OOD");
    println!("{:<12} {:>6.1} {:>6.1} {:>6.1} {:>6.1}", "raw", raw.bias_ssc, raw.rstd, raw.macro_f1, raw_ood.mean_macro_f1);
    println!("{:<12} {:>6.1} {:>6.1} {:>6.1} {:>6.1}", "calibrated", cal.bias_ssc, cal.rstd, cal.macro_f1, ood.mean_macro_f1);

    let model = fit_calibrator(&ctx, corpus.examples(), &config, 0.75)?;
    let path = std::env::temp_dir().join("stance-audit-calibrator.json");
    model.save(&path)?;
    let loaded = CalibratorModel::load(&path)?;
    println!(
        "saved model to {} ({} epochs, loss {:.4} -> {:.4}, intercept shift {:?})",
        path.display(),
        loaded.metadata.epochs_run,
        loaded.metadata.initial_loss,
        loaded.metadata.final_loss,
        loaded.metadata.intercept_shift
    );
    Ok(())
}
