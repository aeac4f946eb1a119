//! Stance predictors behind one record type.
//!
//! Three sources produce [`PredictionRecord`]s: a replay file, the synthetic
//! simulator (see [`crate::simulator`]), and any [`CompletionBackend`] driven
//! through [`predict_batch`] with prompt templating, a persistent cache,
//! bounded concurrency and retries.

mod cache;
mod chat;
mod parse;
mod prompt;

pub use cache::{CacheError, ResponseCache};
pub use chat::ChatBackend;
pub use parse::{parse_stance_response, ParseFailure, STANCE_KEYWORDS};
pub use prompt::{cache_key, prompt_hash, render_prompt, PromptError, PromptTemplate, TemplateName};

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Lexicon};
use crate::labels::{StanceLabel, NUM_STANCES};

/// Tolerance on the distribution sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Scored {
        distribution: [f64; NUM_STANCES],
        argmax: StanceLabel,
    },
    /// Transport or parse failure. Failed records are excluded from metric
    /// denominators and counted separately.
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub example_id: String,
    pub outcome: Outcome,
    pub backend: String,
    pub prompt_hash: String,
    pub raw_response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("prediction for `{id}`: distribution {distribution:?} is not on the probability simplex")]
    NotSimplex {
        id: String,
        distribution: [f64; NUM_STANCES],
    },
    #[error("prediction for `{id}`: label {label} disagrees with distribution argmax {argmax}")]
    LabelMismatch {
        id: String,
        label: StanceLabel,
        argmax: StanceLabel,
    },
    #[error("prediction for `{0}` has neither a label, a distribution nor a failure reason")]
    Empty(String),
}

fn on_simplex(d: &[f64; NUM_STANCES]) -> bool {
    d.iter().all(|p| p.is_finite() && *p >= 0.0) && (d.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE
}

impl PredictionRecord {
    pub fn scored(
        example_id: impl Into<String>,
        distribution: [f64; NUM_STANCES],
        backend: impl Into<String>,
        prompt_hash: impl Into<String>,
    ) -> Result<Self, RecordError> {
        let example_id = example_id.into();
        if !on_simplex(&distribution) {
            return Err(RecordError::NotSimplex {
                id: example_id,
                distribution,
            });
        }
        Ok(Self {
            example_id,
            outcome: Outcome::Scored {
                distribution,
                argmax: StanceLabel::argmax(&distribution),
            },
            backend: backend.into(),
            prompt_hash: prompt_hash.into(),
            raw_response: None,
        })
    }

    /// One-hot record for hard-label backends.
    pub fn hard(
        example_id: impl Into<String>,
        label: StanceLabel,
        backend: impl Into<String>,
        prompt_hash: impl Into<String>,
    ) -> Self {
        Self::scored(example_id, label.one_hot(), backend, prompt_hash).expect("one-hot is on the simplex")
    }

    pub fn failed(
        example_id: impl Into<String>,
        reason: impl Into<String>,
        backend: impl Into<String>,
        prompt_hash: impl Into<String>,
    ) -> Self {
        Self {
            example_id: example_id.into(),
            outcome: Outcome::Failed { reason: reason.into() },
            backend: backend.into(),
            prompt_hash: prompt_hash.into(),
            raw_response: None,
        }
    }

    pub fn with_raw_response(mut self, raw: impl Into<String>) -> Self {
        self.raw_response = Some(raw.into());
        self
    }

    pub fn argmax(&self) -> Option<StanceLabel> {
        match &self.outcome {
            Outcome::Scored { argmax, .. } => Some(*argmax),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn distribution(&self) -> Option<&[f64; NUM_STANCES]> {
        match &self.outcome {
            Outcome::Scored { distribution, .. } => Some(distribution),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self.outcome, Outcome::Failed { .. })
    }
}

/// On-disk form of a prediction. Replay input may carry just a label or
/// just a distribution; written files carry both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PredictionLine {
    pub example_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<StanceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<[f64; NUM_STANCES]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

impl PredictionLine {
    pub fn into_record(self, default_backend: &str) -> Result<PredictionRecord, RecordError> {
        let backend = self.backend.unwrap_or_else(|| default_backend.to_string());
        let hash = self.prompt_hash.unwrap_or_default();
        let mut record = match (self.failed, self.label, self.distribution) {
            (Some(reason), _, _) => PredictionRecord::failed(&self.example_id, reason, backend, hash),
            (None, label, Some(d)) => {
                let r = PredictionRecord::scored(&self.example_id, d, backend, hash)?;
                if let Some(label) = label {
                    let argmax = r.argmax().unwrap();
                    if label != argmax {
                        return Err(RecordError::LabelMismatch {
                            id: self.example_id,
                            label,
                            argmax,
                        });
                    }
                }
                r
            }
            (None, Some(label), None) => PredictionRecord::hard(&self.example_id, label, backend, hash),
            (None, None, None) => return Err(RecordError::Empty(self.example_id)),
        };
        record.raw_response = self.raw_response;
        Ok(record)
    }
}

impl From<&PredictionRecord> for PredictionLine {
    fn from(r: &PredictionRecord) -> Self {
        let (label, distribution, failed) = match &r.outcome {
            Outcome::Scored { distribution, argmax } => (Some(*argmax), Some(*distribution), None),
            Outcome::Failed { reason } => (None, None, Some(reason.clone())),
        };
        Self {
            example_id: r.example_id.clone(),
            label,
            distribution,
            failed,
            backend: Some(r.backend.clone()),
            prompt_hash: (!r.prompt_hash.is_empty()).then(|| r.prompt_hash.clone()),
            raw_response: r.raw_response.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictionFileError {
    #[error("failed to access predictions {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: duplicate prediction for `{id}`")]
    Duplicate { path: PathBuf, id: String },
}

pub fn predictions_to_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&PredictionLine::from(r)).expect("prediction serializes"));
        out.push('\n');
    }
    out
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<(), PredictionFileError> {
    let path = path.as_ref();
    fs::write(path, predictions_to_jsonl(records)).map_err(|source| PredictionFileError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a prediction file. Records without a `backend` field get
/// `default_backend`.
pub fn read_predictions(path: impl AsRef<Path>, default_backend: &str) -> Result<Vec<PredictionRecord>, PredictionFileError> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|source| PredictionFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| PredictionFileError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let parsed: PredictionLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let record = parsed.into_record(default_backend).map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(record.example_id.clone()) {
            return Err(PredictionFileError::Duplicate {
                path: path.to_path_buf(),
                id: record.example_id,
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Lookup by example id.
pub fn index_predictions(records: &[PredictionRecord]) -> HashMap<&str, &PredictionRecord> {
    records.iter().map(|r| (r.example_id.as_str(), r)).collect()
}

/// Replays stored predictions. Examples with no stored record come back
/// as failed records.
#[derive(Debug, Clone, Default)]
pub struct ReplayPredictor {
    records: HashMap<String, PredictionRecord>,
}

impl ReplayPredictor {
    pub fn new(records: Vec<PredictionRecord>) -> Self {
        Self {
            records: records.into_iter().map(|r| (r.example_id.clone(), r)).collect(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PredictionFileError> {
        Ok(Self::new(read_predictions(path, "replay")?))
    }

    pub fn predict(&self, examples: &[Example]) -> Vec<PredictionRecord> {
        examples
            .iter()
            .map(|ex| {
                self.records
                    .get(&ex.id)
                    .cloned()
                    .unwrap_or_else(|| PredictionRecord::failed(&ex.id, "no replay prediction", "replay", ""))
            })
            .collect()
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Response(String),
}

/// A text-completion endpoint. Implementations must be safe to call from
/// several threads at once.
pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Replay,
    Simulator,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    /// Must be 0.0; sampling is never enabled.
    pub temperature: f64,
    pub max_in_flight: usize,
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    pub cache_path: Option<PathBuf>,
    /// Environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Chat,
            endpoint: None,
            model: String::new(),
            temperature: 0.0,
            max_in_flight: 4,
            retries: 2,
            backoff_ms: 250,
            cache_path: None,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("decoding temperature must be 0.0, got {0}")]
    Temperature(f64),
    #[error("max in-flight requests must be at least 1")]
    NoConcurrency,
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        if self.temperature != 0.0 {
            return Err(PredictError::Temperature(self.temperature));
        }
        if self.max_in_flight == 0 {
            return Err(PredictError::NoConcurrency);
        }
        Ok(())
    }
}

fn complete_with_retries(backend: &dyn CompletionBackend, prompt: &str, config: &PredictorConfig) -> Result<String, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.complete(prompt) {
            Ok(raw) => return Ok(raw),
            Err(e) if attempt >= config.retries => return Err(e),
            Err(e) => {
                let delay = config.backoff_ms.saturating_mul(1u64 << attempt.min(16));
                log::warn!("{} request failed ({e}); retry {} in {delay} ms", backend.name(), attempt + 1);
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
        }
    }
}

/// Predicts every example through `backend`, consulting `cache` first.
///
/// Distinct prompts that miss the cache are sent at most once each, by at
/// most `max_in_flight` worker threads. Results come back in input order.
/// Transport failures (after retries) and unparseable responses become
/// failed records; the batch itself only fails on invalid configuration or
/// a cache write error.
pub fn predict_batch(
    backend: &dyn CompletionBackend,
    examples: &[Example],
    lexicon: &Lexicon,
    template: &PromptTemplate,
    config: &PredictorConfig,
    cache: &ResponseCache,
) -> Result<Vec<PredictionRecord>, PredictError> {
    config.validate()?;

    let prompts: Vec<Result<(String, String), PromptError>> = examples
        .iter()
        .map(|ex| {
            render_prompt(template, ex, lexicon).map(|p| {
                let key = cache_key(backend.name(), backend.model(), &p);
                (p, key)
            })
        })
        .collect();

    let mut pending: Vec<(&str, &str)> = Vec::new();
    let mut queued = HashSet::new();
    for (prompt, key) in prompts.iter().flatten() {
        if !cache.contains(key) && queued.insert(key.as_str()) {
            pending.push((key.as_str(), prompt.as_str()));
        }
    }

    let transport_errors: Mutex<HashMap<String, String>> = Mutex::new(HashMap::new());
    let cache_error: Mutex<Option<CacheError>> = Mutex::new(None);
    if !pending.is_empty() {
        let next = AtomicUsize::new(0);
        let workers = config.max_in_flight.min(pending.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&(key, prompt)) = pending.get(i) else {
                        break;
                    };
                    log::debug!("request {key}: {prompt}");
                    match complete_with_retries(backend, prompt, config) {
                        Ok(raw) => {
                            log::debug!("response {key}: {raw}");
                            if let Err(e) = cache.insert(key, &raw) {
                                cache_error.lock().unwrap().get_or_insert(e);
                            }
                        }
                        Err(e) => {
                            transport_errors.lock().unwrap().insert(key.to_string(), e.to_string());
                        }
                    }
                });
            }
        });
    }
    if let Some(e) = cache_error.into_inner().unwrap() {
        return Err(e.into());
    }
    let transport_errors = transport_errors.into_inner().unwrap();

    let records = examples
        .iter()
        .zip(prompts)
        .map(|(ex, rendered)| {
            let (prompt, key) = match rendered {
                Ok(pk) => pk,
                Err(e) => return PredictionRecord::failed(&ex.id, e.to_string(), backend.name(), ""),
            };
            let hash = prompt_hash(&prompt);
            match cache.get(&key) {
                Some(raw) => match parse_stance_response(&raw) {
                    Ok(label) => PredictionRecord::hard(&ex.id, label, backend.name(), hash).with_raw_response(raw),
                    Err(e) => PredictionRecord::failed(&ex.id, format!("parse failure: {e}"), backend.name(), hash)
                        .with_raw_response(raw),
                },
                None => {
                    let reason = transport_errors
                        .get(&key)
                        .cloned()
                        .unwrap_or_else(|| "no response".to_string());
                    PredictionRecord::failed(&ex.id, reason, backend.name(), hash)
                }
            }
        })
        .collect();
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_must_be_on_simplex() {
        assert!(PredictionRecord::scored("a", [0.5, 0.5, 0.0], "b", "").is_ok());
        assert!(PredictionRecord::scored("a", [0.5, 0.6, 0.0], "b", "").is_err());
        assert!(PredictionRecord::scored("a", [1.2, -0.2, 0.0], "b", "").is_err());
        assert!(PredictionRecord::scored("a", [f64::NAN, 0.5, 0.5], "b", "").is_err());
    }

    #[test]
    fn argmax_ties_follow_label_order() {
        let r = PredictionRecord::scored("a", [0.0, 0.5, 0.5], "b", "").unwrap();
        assert_eq!(r.argmax(), Some(StanceLabel::Against));
    }

    #[test]
    fn prediction_lines_accept_label_or_distribution() {
        let by_label: PredictionLine = serde_json::from_str(r#"{"example_id":"x","label":"neutral"}"#).unwrap();
        let r = by_label.into_record("replay").unwrap();
        assert_eq!(r.distribution(), Some(&[0.0, 0.0, 1.0]));
        assert_eq!(r.backend, "replay");

        let by_dist: PredictionLine =
            serde_json::from_str(r#"{"example_id":"x","distribution":[0.2,0.7,0.1]}"#).unwrap();
        assert_eq!(by_dist.into_record("replay").unwrap().argmax(), Some(StanceLabel::Against));

        let mismatch: PredictionLine =
            serde_json::from_str(r#"{"example_id":"x","label":"support","distribution":[0.2,0.7,0.1]}"#).unwrap();
        assert!(matches!(mismatch.into_record("replay"), Err(RecordError::LabelMismatch { .. })));

        let empty: PredictionLine = serde_json::from_str(r#"{"example_id":"x"}"#).unwrap();
        assert!(matches!(empty.into_record("replay"), Err(RecordError::Empty(_))));
    }

    #[test]
    fn config_enforces_deterministic_decoding() {
        let mut c = PredictorConfig::default();
        assert!(c.validate().is_ok());
        c.temperature = 0.7;
        assert!(matches!(c.validate(), Err(PredictError::Temperature(_))));
        c.temperature = 0.0;
        c.max_in_flight = 0;
        assert!(matches!(c.validate(), Err(PredictError::NoConcurrency)));
    }
}
