//! Renders a leaderboard from metric reports, as markdown and CSV.
//!
//!     cargo run --example leaderboard

use stance_audit::labels::StanceLabel;
use stance_audit::metrics::{evaluate, MetricOptions};
use stance_audit::report::{render_leaderboard, Format, LeaderboardRow};
use stance_audit::simulator::{simulate_batch, EntityBias, SimulatorConfig};
use stance_audit::synthetic::synthetic_corpus;

fn main() -> anyhow::Result<()> {
    let corpus = synthetic_corpus();
    let mut rows = Vec::new();
    for (name, leakage_rate, bias) in [("clean", 0.0, None), ("leaky", 0.6, None), ("leaky+entity", 0.6, Some(0.5))] {
        let mut cfg = SimulatorConfig {
            leakage_rate,
            seed: 5,
            ..Default::default()
        };
        if let Some(rate) = bias {
            cfg.entity_bias.insert("pita".into(), EntityBias { label: StanceLabel::Support, rate });
        }
        let preds = simulate_batch(corpus.examples(), &cfg)?;
        let report = evaluate(corpus.examples(), &preds, MetricOptions::default())?;
        rows.push(LeaderboardRow::from_report(name, &report, format!("leakage {leakage_rate}")));
    }
    println!("{}", render_leaderboard(&rows, Format::Markdown)?);
    println!("{}", render_leaderboard(&rows, Format::Csv)?);
    Ok(())
}
