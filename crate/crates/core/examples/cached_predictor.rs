//! Drives a completion backend through the prompt, cache and parse path.
//! The backend here is a local stand-in that answers from keywords, so the
//! example runs offline; the second pass is served from the cache.
//!
//!     cargo run --example cached_predictor

use std::sync::atomic::{AtomicUsize, Ordering};

use stance_audit::predictor::{
    predict_batch, BackendError, CompletionBackend, PredictorConfig, PromptTemplate, ResponseCache, TemplateName,
};
use stance_audit::synthetic::synthetic_corpus;

struct KeywordBackend {
    calls: AtomicUsize,
}

impl CompletionBackend for KeywordBackend {
    fn name(&self) -> &str {
        "keyword"
    }

    fn model(&self) -> &str {
        "keyword-v1"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let lower = prompt.to_lowercase();
        let has = |cues: &[&str]| cues.iter().any(|c| lower.contains(c));
        let answer = if has(&["never vote", "wrong choice", "step aside", "nobody should trust", "i oppose", "ไม่เอา", "ไม่เหมาะ", "ไม่เลือก", "ไม่ไว้ใจ", "ลาออก"]) {
            "against"
        } else if has(&["my vote", "i back", "prime minister", "stand with", "believe in", "สนับสนุน", "นายกรัฐมนตรี", "เลือก", "เชื่อมั่น", "กำลังใจ"]) {
            "support"
        } else {
            "neutral"
        };
        Ok(format!("Stance: {answer}"))
    }
}

fn main() -> anyhow::Result<()> {
    let corpus = synthetic_corpus();
    let examples = &corpus.examples()[..30];
    let backend = KeywordBackend { calls: AtomicUsize::new(0) };
    let template = PromptTemplate::builtin(TemplateName::Raw);
    let config = PredictorConfig::default();
    let cache_path = std::env::temp_dir().join("stance-audit-cache-demo.jsonl");
    let _ = std::fs::remove_file(&cache_path);

    for pass in 1..=2 {
        let cache = ResponseCache::open(&cache_path)?;
        let records = predict_batch(&backend, examples, corpus.lexicon(), &template, &config, &cache)?;
        let agree = records
            .iter()
            .zip(examples)
            .filter(|(r, ex)| r.argmax() == Some(ex.stance))
            .count();
        println!(
            "pass {pass}: {} records, {agree} match gold, backend calls so far {}",
            records.len(),
            backend.calls.load(Ordering::SeqCst)
        );
    }
    Ok(())
}
