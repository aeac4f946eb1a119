use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use stance_audit::pipeline::{Pipeline, PipelineConfig, PipelineError};
use stance_audit::predictor::{prompt_hash, BackendError, CompletionBackend};

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn bundled_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(crate_dir().join("configs/pipeline.toml")).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

/// Every file under `dir`, relative path and bytes, sorted.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn bundled_config_produces_a_two_row_leaderboard() {
    let dir = tempfile::tempdir().unwrap();
    let summary = Pipeline::new(bundled_config(dir.path())).run().unwrap();
    assert_eq!(summary.leaderboard.len(), 2);
    assert_eq!(summary.leaderboard[0].system(), "simulator (raw)");
    assert_eq!(summary.leaderboard[1].system(), "simulator (calibrated)");
    for name in [
        "validation.json",
        "augmented.jsonl",
        "counterfactuals.json",
        "leaderboard.md",
        "leaderboard.csv",
        "per_entity.csv",
        "results.json",
        "backends/simulator/predictions.jsonl",
        "backends/simulator/calibrator.json",
        "backends/simulator/calibrated.jsonl",
        "backends/simulator/metrics_raw.json",
        "backends/simulator/metrics_calibrated.json",
        "backends/simulator/ood.json",
    ] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let md = fs::read_to_string(dir.path().join("leaderboard.md")).unwrap();
    assert_eq!(md.lines().filter(|l| l.starts_with("| simulator")).count(), 2);
    let r = &summary.backends[0];
    assert!(r.calibrated.bias_ssc < r.raw.bias_ssc);
    assert!(r.calibrated.rstd < r.raw.rstd);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    Pipeline::new(bundled_config(a.path())).run().unwrap();
    Pipeline::new(bundled_config(b.path())).run().unwrap();
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert!(!sa.is_empty());
    assert_eq!(sa, sb);
}

#[test]
fn missing_corpus_fails_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = bundled_config(&out);
    cfg.corpus = dir.path().join("nope.jsonl");
    let err = Pipeline::new(cfg).run().unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(!out.exists());
}

#[test]
fn failing_backend_keeps_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "not json\n").unwrap();
    let text = format!(
        "corpus = {:?}\nlexicon = {:?}\noutput_dir = \"out\"\n\n[[backends]]\nname = \"broken\"\nkind = \"replay\"\npredictions = \"bad.jsonl\"\n",
        crate_dir().join("data/synthetic_corpus.jsonl"),
        crate_dir().join("data/lexicon.json"),
    );
    let cfg = PipelineConfig::from_toml(&text, dir.path()).unwrap();
    let err = Pipeline::new(cfg).run().unwrap_err();
    assert!(matches!(err, PipelineError::Runtime { stage: "predict", .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    let out = dir.path().join("out");
    assert!(out.join("validation.json").is_file());
    assert!(out.join("augmented.jsonl").is_file());
    assert!(!out.join("leaderboard.md").exists());
}

/// Answers from the prompt hash and counts calls.
struct Counting(AtomicUsize);

impl CompletionBackend for Counting {
    fn name(&self) -> &str {
        "counting"
    }

    fn model(&self) -> &str {
        "counting-1"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        let byte = u8::from_str_radix(&prompt_hash(prompt)[..2], 16).unwrap();
        Ok(["Stance: support", "Stance: against", "Stance: neutral"][byte as usize % 3].to_string())
    }
}

#[test]
fn chat_backend_rerun_is_served_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::load(crate_dir().join("configs/chat.toml")).unwrap();
    cfg.output_dir = dir.path().join("out");
    let cache = dir.path().join("cache.jsonl");
    cfg.backends[0].chat.as_mut().unwrap().cache_path = Some(cache.clone());
    let name = cfg.backends[0].name.clone();

    let cold = Arc::new(Counting(AtomicUsize::new(0)));
    let first = Pipeline::new(cfg.clone()).with_completion_backend(&name, cold.clone()).run().unwrap();
    assert!(cold.0.load(Ordering::SeqCst) > 0);
    let cache_bytes = fs::read(&cache).unwrap();
    let before = snapshot(&cfg.output_dir);

    let warm = Arc::new(Counting(AtomicUsize::new(0)));
    let second = Pipeline::new(cfg.clone()).with_completion_backend(&name, warm.clone()).run().unwrap();
    assert_eq!(warm.0.load(Ordering::SeqCst), 0);
    assert_eq!(fs::read(&cache).unwrap(), cache_bytes);
    assert_eq!(snapshot(&cfg.output_dir), before);
    assert_eq!(first.backends[0].raw.macro_f1, second.backends[0].raw.macro_f1);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stance-audit")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = crate_dir().join("data");
    let lexicon = data.join("lexicon.json");
    let lexicon = lexicon.to_str().unwrap();

    let good = data.join("synthetic_corpus.jsonl");
    let ok = cli(&["validate", "--corpus", good.to_str().unwrap(), "--lexicon", lexicon]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\": 1}\n").unwrap();
    let invalid = cli(&["validate", "--corpus", bad.to_str().unwrap(), "--lexicon", lexicon]);
    assert_eq!(invalid.status.code(), Some(1));

    let missing = dir.path().join("missing.toml");
    assert_eq!(cli(&["--config", missing.to_str().unwrap(), "run"]).status.code(), Some(3));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(3));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "corpus = \"../\"\n").unwrap();
    assert_eq!(cli(&["--config", broken.to_str().unwrap(), "run"]).status.code(), Some(3));

    let preds = dir.path().join("preds.jsonl");
    fs::write(&preds, "garbage\n").unwrap();
    let cfg = dir.path().join("replay.toml");
    fs::write(
        &cfg,
        format!(
            "corpus = {:?}\nlexicon = {:?}\noutput_dir = \"out\"\n\n[[backends]]\nname = \"r\"\nkind = \"replay\"\npredictions = \"preds.jsonl\"\n",
            good, lexicon
        ),
    )
    .unwrap();
    assert_eq!(cli(&["--config", cfg.to_str().unwrap(), "run"]).status.code(), Some(2));
}
