//! Sweeps the simulator's sentiment-leakage rate and prints how the bias
//! metrics respond, with and without a per-entity preference.
//!
//!     cargo run --example simulate_bias

use stance_audit::labels::StanceLabel;
use stance_audit::metrics::{evaluate, MetricOptions};
use stance_audit::simulator::{simulate_batch, EntityBias, SimulatorConfig};
use stance_audit::synthetic::synthetic_corpus;

fn main() -> anyhow::Result<()> {
    let corpus = synthetic_corpus();
    println!("{:<8} {:<14} {:>8} {:>6} {:>6}", "leakage", "entity bias", "SSC", "RStd", "F1");
    for leakage_rate in [0.0, 0.25, 0.5, 0.75, 1.0] {
        for biased in [false, true] {
            let mut cfg = SimulatorConfig {
                leakage_rate,
                base_accuracy: 0.9,
                seed: 11,
                ..Default::default()
            };
            if biased {
                cfg.entity_bias.insert(
                    "thaksin".into(),
                    EntityBias {
                        label: StanceLabel::Against,
                        rate: 0.6,
                    },
                );
            }
            let preds = simulate_batch(corpus.examples(), &cfg)?;
            let r = evaluate(corpus.examples(), &preds, MetricOptions::default())?;
            let tag = if biased { "thaksin/against" } else { "-" };
            println!(
                "{leakage_rate:<8} {tag:<14} {:>8.1} {:>6.1} {:>6.1}",
                r.bias_ssc, r.rstd, r.macro_f1
            );
        }
    }
    Ok(())
}
