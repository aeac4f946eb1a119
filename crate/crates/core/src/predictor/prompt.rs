use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Example, Lexicon};

const TEXT: &str = "{text}";
const TARGET: &str = "{target}";

/// The three prompting conditions compared on a leaderboard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateName {
    Raw,
    Debias,
    Cot,
}

impl TemplateName {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Raw => "raw",
            TemplateName::Debias => "debias",
            TemplateName::Cot => "cot",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(TemplateName::Raw),
            "debias" => Ok(TemplateName::Debias),
            "cot" => Ok(TemplateName::Cot),
            other => Err(PromptError::UnknownTemplate(other.to_string())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template `{0}` (expected raw, debias or cot)")]
    UnknownTemplate(String),
    #[error("template `{name}` must contain `{placeholder}` exactly once, found {count}")]
    Placeholder {
        name: TemplateName,
        placeholder: &'static str,
        count: usize,
    },
    #[error("failed to read template {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("example `{id}` targets unknown entity `{target}`")]
    UnknownTarget { id: String, target: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: TemplateName,
    text: String,
}

impl PromptTemplate {
    pub fn new(name: TemplateName, text: impl Into<String>) -> Result<Self, PromptError> {
        let text = text.into();
        for placeholder in [TEXT, TARGET] {
            let count = text.matches(placeholder).count();
            if count != 1 {
                return Err(PromptError::Placeholder {
                    name,
                    placeholder,
                    count,
                });
            }
        }
        Ok(Self { name, text })
    }

    /// The templates shipped in `prompts/`.
    pub fn builtin(name: TemplateName) -> Self {
        let text = match name {
            TemplateName::Raw => include_str!("../../prompts/raw.txt"),
            TemplateName::Debias => include_str!("../../prompts/debias.txt"),
            TemplateName::Cot => include_str!("../../prompts/cot.txt"),
        };
        Self::new(name, text).expect("builtin templates are valid")
    }

    pub fn from_file(name: TemplateName, path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(name, text)
    }

    pub fn name(&self) -> TemplateName {
        self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Fills the template in a single pass, so placeholder-like strings inside
/// the example text are never expanded.
pub fn render_prompt(template: &PromptTemplate, example: &Example, lexicon: &Lexicon) -> Result<String, PromptError> {
    let target = lexicon.get(&example.target_id).ok_or_else(|| PromptError::UnknownTarget {
        id: example.id.clone(),
        target: example.target_id.clone(),
    })?;
    let t = &template.text;
    let text_at = t.find(TEXT).expect("validated");
    let target_at = t.find(TARGET).expect("validated");
    let mut parts = [(text_at, TEXT, example.text.as_str()), (target_at, TARGET, target.canonical.as_str())];
    parts.sort_by_key(|p| p.0);

    let mut out = String::with_capacity(t.len() + example.text.len() + target.canonical.len());
    let mut cursor = 0;
    for (at, placeholder, value) in parts {
        out.push_str(&t[cursor..at]);
        out.push_str(value);
        cursor = at + placeholder.len();
    }
    out.push_str(&t[cursor..]);
    Ok(out)
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Cache key: digest of backend, model and prompt bytes, NUL-separated.
pub fn cache_key(backend: &str, model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(backend.as_bytes());
    h.update([0u8]);
    h.update(model.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityEntry, Provenance, Pronouns};
    use crate::labels::{SentimentLabel, StanceLabel};

    fn fixture() -> (Example, Lexicon) {
        let lexicon = Lexicon::new(vec![EntityEntry {
            entity_id: "pita".into(),
            canonical: "Pita".into(),
            aliases: vec!["Pita".into(), "พิธา".into()],
            pronouns: Pronouns {
                subject: "he".into(),
                object: "him".into(),
                possessive: "his".into(),
            },
            party: None,
        }])
        .unwrap();
        let example = Example {
            id: "e1".into(),
            text: "พิธา did a great job {target}".into(),
            target_id: "pita".into(),
            stance: StanceLabel::Support,
            sentiment: SentimentLabel::Positive,
            rationale: None,
            bias_markers: None,
            provenance: Provenance::Original,
            source_id: None,
            stance_unverified: false,
        };
        (example, lexicon)
    }

    #[test]
    fn raw_prompt_contains_text_and_canonical_target() {
        let (ex, lex) = fixture();
        let p = render_prompt(&PromptTemplate::builtin(TemplateName::Raw), &ex, &lex).unwrap();
        assert!(p.contains("toward Pita."));
        // placeholder text inside the example is not expanded
        assert!(p.contains("พิธา did a great job {target}"));
    }

    #[test]
    fn cot_prompt_adds_reasoning_block() {
        let (ex, lex) = fixture();
        let p = render_prompt(&PromptTemplate::builtin(TemplateName::Cot), &ex, &lex).unwrap();
        assert!(p.contains("Reason step by step"));
        let raw = render_prompt(&PromptTemplate::builtin(TemplateName::Raw), &ex, &lex).unwrap();
        assert!(!raw.contains("Reason step by step"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let (ex, lex) = fixture();
        let t = PromptTemplate::builtin(TemplateName::Debias);
        let a = render_prompt(&t, &ex, &lex).unwrap();
        let b = render_prompt(&t, &ex, &lex).unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert_eq!(prompt_hash(&a), prompt_hash(&b));
        assert_eq!(prompt_hash(&a).len(), 64);
    }

    #[test]
    fn placeholders_required_once() {
        assert!(matches!(
            PromptTemplate::new(TemplateName::Raw, "no placeholders"),
            Err(PromptError::Placeholder { count: 0, .. })
        ));
        assert!(matches!(
            PromptTemplate::new(TemplateName::Raw, "{text} {text} {target}"),
            Err(PromptError::Placeholder { count: 2, .. })
        ));
    }

    #[test]
    fn cache_key_separates_fields() {
        assert_ne!(cache_key("ab", "c", "p"), cache_key("a", "bc", "p"));
        assert_eq!(cache_key("chat", "m", "p"), cache_key("chat", "m", "p"));
    }
}
