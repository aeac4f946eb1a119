//! Runs the bundled pipeline config into a temporary directory and lists
//! the artifacts.
//!
//!     cargo run --example full_pipeline

use std::path::Path;

use stance_audit::pipeline::{Pipeline, PipelineConfig};
use stance_audit::report::{render_leaderboard, Format};

fn main() -> anyhow::Result<()> {
    let config_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/pipeline.toml");
    let mut config = PipelineConfig::load(&config_path)?;
    config.output_dir = std::env::temp_dir().join("stance-audit-pipeline");

    let summary = Pipeline::new(config).run()?;
    print!("{}", render_leaderboard(&summary.leaderboard, Format::Markdown)?);
    for backend in &summary.backends {
        println!("{}: {} calibrated predictions", backend.name, backend.calibrated_predictions.len());
    }

    let mut files = Vec::new();
    let mut stack = vec![summary.output_dir.clone()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    for f in files {
        println!("  {}", f.strip_prefix(&summary.output_dir)?.display());
    }
    Ok(())
}
