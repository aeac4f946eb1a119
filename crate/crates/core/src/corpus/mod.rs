//! Annotated stance corpus: loading, validation, balance checks, entity
//! hold-out splits and annotation agreement.
//!
//! Corpus files are UTF-8 JSON lines, one example per line. Blank lines are
//! ignored. All text is normalized to NFC on load.

mod agreement;
mod balance;
mod lexicon;

pub use agreement::{fleiss_kappa, fleiss_kappa_ratio, load_annotations, AgreementError, AnnotationSet};
pub use balance::{balance_report, BalanceReport, ImbalanceFlag, TargetBalance};
pub use lexicon::{load_lexicon, EntityEntry, Lexicon, LexiconError, Pronouns};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::labels::{SentimentLabel, StanceLabel};
use crate::text::nfc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Original,
    Counterfactual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasMarkers {
    pub sentiment_leakage: bool,
    pub entity_bias: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One annotated corpus item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub target_id: String,
    pub stance: StanceLabel,
    pub sentiment: SentimentLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_markers: Option<BiasMarkers>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    /// Set on counterfactual variants: the stance was copied from the source
    /// example and was never annotated for the swapped entity.
    #[serde(default, skip_serializing_if = "is_false")]
    pub stance_unverified: bool,
}

impl Example {
    pub fn is_original(&self) -> bool {
        self.provenance == Provenance::Original
    }
}

/// A record as it appears on disk, before any invariant is checked.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct RawRecord {
    pub id: Option<String>,
    pub text: Option<String>,
    pub target_id: Option<String>,
    pub stance: Option<String>,
    pub sentiment: Option<String>,
    pub rationale: Option<String>,
    pub bias_markers: Option<BiasMarkers>,
    pub provenance: Option<String>,
    pub source_id: Option<String>,
    #[serde(default)]
    pub stance_unverified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldIssue {
    pub field: &'static str,
    pub message: String,
}

/// Every invariant an example violates, in field order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ValidationError {
    pub id: Option<String>,
    pub issues: Vec<FieldIssue>,
}

impl ValidationError {
    pub fn fields(&self) -> Vec<&'static str> {
        self.issues.iter().map(|i| i.field).collect()
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = self.id.as_deref().unwrap_or("<missing id>");
        let first = &self.issues[0];
        write!(f, "example `{id}`: field `{}`: {}", first.field, first.message)?;
        if self.issues.len() > 1 {
            write!(f, " (+{} more)", self.issues.len() - 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        source: ValidationError,
    },
    #[error("{0}")]
    InvalidExample(ValidationError),
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("counterfactual `{id}` references `{source_id}`, which is not an original example in this corpus")]
    DanglingSource { id: String, source_id: String },
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("entity hold-out needs at least two entities, lexicon has {0}")]
    TooFewEntities(usize),
}

/// Checks one parsed record against the example invariants. Collects every
/// violation rather than stopping at the first.
pub fn validate_example(raw: RawRecord, lexicon: &Lexicon) -> Result<Example, ValidationError> {
    let mut issues = Vec::new();
    let mut issue = |field: &'static str, message: String| issues.push(FieldIssue { field, message });

    let id = raw.id.map(|s| nfc(&s));
    match &id {
        Some(s) if !s.trim().is_empty() => {}
        _ => issue("id", "must be a nonempty string".into()),
    }
    let text = raw.text.map(|s| nfc(&s));
    match &text {
        Some(t) if !t.trim().is_empty() => {}
        _ => issue("text", "must be nonempty after trimming whitespace".into()),
    }
    let target_id = raw.target_id.map(|s| nfc(&s));
    match &target_id {
        Some(t) if lexicon.contains(t) => {}
        Some(t) => issue("target_id", format!("`{t}` does not resolve in the entity lexicon")),
        None => issue("target_id", "missing".into()),
    }
    let stance = match raw.stance.as_deref().map(str::parse::<StanceLabel>) {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            issue("stance", e.to_string());
            None
        }
        None => {
            issue("stance", "missing".into());
            None
        }
    };
    let sentiment = match raw.sentiment.as_deref().map(str::parse::<SentimentLabel>) {
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => {
            issue("sentiment", e.to_string());
            None
        }
        None => {
            issue("sentiment", "missing".into());
            None
        }
    };
    let provenance = match raw.provenance.as_deref() {
        Some("original") => Some(Provenance::Original),
        Some("counterfactual") => Some(Provenance::Counterfactual),
        Some(other) => {
            issue("provenance", format!("`{other}` is not one of original, counterfactual"));
            None
        }
        None => {
            issue("provenance", "missing".into());
            None
        }
    };
    let source_id = raw.source_id.map(|s| nfc(&s));
    match (provenance, &source_id) {
        (Some(Provenance::Counterfactual), None) => {
            issue("source_id", "counterfactual examples must reference their original".into())
        }
        (Some(Provenance::Counterfactual), Some(s)) if s.trim().is_empty() => {
            issue("source_id", "must be nonempty".into())
        }
        (Some(Provenance::Original), Some(_)) => {
            issue("source_id", "only counterfactual examples may carry a source_id".into())
        }
        _ => {}
    }

    if !issues.is_empty() {
        return Err(ValidationError { id, issues });
    }
    Ok(Example {
        id: id.unwrap(),
        text: text.unwrap(),
        target_id: target_id.unwrap(),
        stance: stance.unwrap(),
        sentiment: sentiment.unwrap(),
        rationale: raw.rationale.map(|r| nfc(&r)),
        bias_markers: raw.bias_markers,
        provenance: provenance.unwrap(),
        source_id,
        stance_unverified: raw.stance_unverified,
    })
}

/// A validated, immutable corpus. Examples keep load order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    examples: Vec<Example>,
    lexicon: Lexicon,
}

impl Corpus {
    /// Builds a corpus from already-typed examples, re-checking every
    /// invariant (by round-tripping through the raw form).
    pub fn new(examples: Vec<Example>, lexicon: Lexicon) -> Result<Self, CorpusError> {
        let mut checked = Vec::with_capacity(examples.len());
        for ex in examples {
            let raw = RawRecord {
                id: Some(ex.id),
                text: Some(ex.text),
                target_id: Some(ex.target_id),
                stance: Some(ex.stance.as_str().to_string()),
                sentiment: Some(ex.sentiment.as_str().to_string()),
                rationale: ex.rationale,
                bias_markers: ex.bias_markers,
                provenance: Some(
                    match ex.provenance {
                        Provenance::Original => "original",
                        Provenance::Counterfactual => "counterfactual",
                    }
                    .to_string(),
                ),
                source_id: ex.source_id,
                stance_unverified: ex.stance_unverified,
            };
            checked.push(validate_example(raw, &lexicon).map_err(CorpusError::InvalidExample)?);
        }
        Self::from_validated(checked, lexicon)
    }

    fn from_validated(examples: Vec<Example>, lexicon: Lexicon) -> Result<Self, CorpusError> {
        let mut ids = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(CorpusError::DuplicateId(ex.id.clone()));
            }
        }
        let originals: HashSet<&str> = examples
            .iter()
            .filter(|e| e.is_original())
            .map(|e| e.id.as_str())
            .collect();
        for ex in examples.iter().filter(|e| !e.is_original()) {
            let source = ex.source_id.as_deref().unwrap_or_default();
            if !originals.contains(source) {
                return Err(CorpusError::DanglingSource {
                    id: ex.id.clone(),
                    source_id: source.to_string(),
                });
            }
        }
        Ok(Self { examples, lexicon })
    }

    /// Parses JSON lines from `reader`. Line numbers in errors are 1-based.
    pub fn from_reader(reader: impl Read, lexicon: Lexicon) -> Result<Self, CorpusError> {
        let mut examples = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let example = validate_example(raw, &lexicon).map_err(|source| CorpusError::Invalid {
                line: line_no,
                source,
            })?;
            examples.push(example);
        }
        Self::from_validated(examples, lexicon)
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Only the original (non-counterfactual) examples, in order.
    pub fn originals(&self) -> Corpus {
        Corpus {
            examples: self.examples.iter().filter(|e| e.is_original()).cloned().collect(),
            lexicon: self.lexicon.clone(),
        }
    }

    pub fn to_jsonl(&self) -> String {
        examples_to_jsonl(&self.examples)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Subset by predicate, sharing the lexicon.
    pub fn filter(&self, mut keep: impl FnMut(&Example) -> bool) -> Corpus {
        Corpus {
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
            lexicon: self.lexicon.clone(),
        }
    }
}

pub fn examples_to_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex).expect("example serializes"));
        out.push('\n');
    }
    out
}

pub fn load_corpus(
    corpus_path: impl AsRef<Path>,
    lexicon_path: impl AsRef<Path>,
) -> Result<Corpus, CorpusError> {
    let lexicon = load_lexicon(lexicon_path)?;
    load_corpus_with_lexicon(corpus_path, lexicon)
}

pub fn load_corpus_with_lexicon(path: impl AsRef<Path>, lexicon: Lexicon) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::from_reader(file, lexicon)
}

/// Splits off every example targeting `held_out`. The fit side is what a
/// calibrator may see; the eval side is scored zero-shot.
pub fn leave_one_entity_out_split(corpus: &Corpus, held_out: &str) -> Result<(Corpus, Corpus), CorpusError> {
    if !corpus.lexicon.contains(held_out) {
        return Err(CorpusError::UnknownEntity(held_out.to_string()));
    }
    if corpus.lexicon.len() < 2 {
        return Err(CorpusError::TooFewEntities(corpus.lexicon.len()));
    }
    let (eval, fit): (Vec<Example>, Vec<Example>) =
        corpus.examples.iter().cloned().partition(|e| e.target_id == held_out);
    Ok((
        Corpus {
            examples: fit,
            lexicon: corpus.lexicon.clone(),
        },
        Corpus {
            examples: eval,
            lexicon: corpus.lexicon.clone(),
        },
    ))
}
