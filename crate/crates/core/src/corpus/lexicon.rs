//! Entity lexicon: the political figures a corpus may target, with every
//! surface form used to find them in text.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::text::nfc;

/// Third-person pronoun forms used when substituting one entity for another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pronouns {
    pub subject: String,
    pub object: String,
    pub possessive: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityEntry {
    pub entity_id: String,
    pub canonical: String,
    pub aliases: Vec<String>,
    pub pronouns: Pronouns,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub party: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed lexicon: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("lexicon entry has an empty entity_id")]
    EmptyId,
    #[error("duplicate entity_id `{0}`")]
    DuplicateEntity(String),
    #[error("entity `{0}`: canonical name is not listed among its aliases")]
    CanonicalNotAlias(String),
    #[error("entity `{entity}`: aliases `{first}` and `{second}` are identical after normalization")]
    DuplicateAlias {
        entity: String,
        first: String,
        second: String,
    },
    #[error("entity `{entity}`: empty {field}")]
    EmptyField { entity: String, field: &'static str },
}

/// Ordered list of entities. Order is file order and is used wherever the
/// pipeline iterates "all other entities", so it must be stable.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon {
    entries: Vec<EntityEntry>,
}

fn alias_key(alias: &str) -> String {
    nfc(alias).to_lowercase()
}

impl Lexicon {
    /// Normalizes every string to NFC and checks the entry invariants.
    pub fn new(entries: Vec<EntityEntry>) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(entries.len());
        for mut entry in entries {
            entry.entity_id = nfc(&entry.entity_id);
            entry.canonical = nfc(&entry.canonical);
            entry.aliases = entry.aliases.iter().map(|a| nfc(a)).collect();
            entry.pronouns = Pronouns {
                subject: nfc(&entry.pronouns.subject),
                object: nfc(&entry.pronouns.object),
                possessive: nfc(&entry.pronouns.possessive),
            };
            validate_entry(&entry)?;
            if !seen.insert(entry.entity_id.clone()) {
                return Err(LexiconError::DuplicateEntity(entry.entity_id));
            }
            normalized.push(entry);
        }
        Ok(Self {
            entries: normalized,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, LexiconError> {
        let entries: Vec<EntityEntry> = serde_json::from_str(json)?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[EntityEntry] {
        &self.entries
    }

    pub fn get(&self, entity_id: &str) -> Option<&EntityEntry> {
        self.entries.iter().find(|e| e.entity_id == entity_id)
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.get(entity_id).is_some()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.entity_id.as_str())
    }

    pub fn id_set(&self) -> BTreeSet<String> {
        self.ids().map(str::to_string).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("lexicon serializes")
    }
}

fn validate_entry(entry: &EntityEntry) -> Result<(), LexiconError> {
    if entry.entity_id.trim().is_empty() {
        return Err(LexiconError::EmptyId);
    }
    let empty = |field| LexiconError::EmptyField {
        entity: entry.entity_id.clone(),
        field,
    };
    if entry.canonical.trim().is_empty() {
        return Err(empty("canonical"));
    }
    if entry.aliases.iter().any(|a| a.is_empty()) {
        return Err(empty("alias"));
    }
    let p = &entry.pronouns;
    if p.subject.is_empty() || p.object.is_empty() || p.possessive.is_empty() {
        return Err(empty("pronoun"));
    }
    if !entry.aliases.contains(&entry.canonical) {
        return Err(LexiconError::CanonicalNotAlias(entry.entity_id.clone()));
    }
    for (i, a) in entry.aliases.iter().enumerate() {
        for b in &entry.aliases[i + 1..] {
            if alias_key(a) == alias_key(b) {
                return Err(LexiconError::DuplicateAlias {
                    entity: entry.entity_id.clone(),
                    first: a.clone(),
                    second: b.clone(),
                });
            }
        }
    }
    Ok(())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Lexicon::from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, canonical: &str, aliases: &[&str]) -> EntityEntry {
        EntityEntry {
            entity_id: id.into(),
            canonical: canonical.into(),
            aliases: aliases.iter().map(|s| s.to_string()).collect(),
            pronouns: Pronouns {
                subject: "he".into(),
                object: "him".into(),
                possessive: "his".into(),
            },
            party: None,
        }
    }

    #[test]
    fn canonical_must_be_an_alias() {
        let err = Lexicon::new(vec![entry("pita", "Pita", &["พิธา"])]).unwrap_err();
        assert!(matches!(err, LexiconError::CanonicalNotAlias(id) if id == "pita"));
    }

    #[test]
    fn aliases_compared_after_normalization() {
        let err = Lexicon::new(vec![entry("pita", "Pita", &["Pita", "PITA"])]).unwrap_err();
        assert!(matches!(err, LexiconError::DuplicateAlias { .. }));
    }

    #[test]
    fn duplicate_entity_rejected() {
        let err = Lexicon::new(vec![
            entry("pita", "Pita", &["Pita"]),
            entry("pita", "Pita", &["Pita"]),
        ])
        .unwrap_err();
        assert!(matches!(err, LexiconError::DuplicateEntity(_)));
    }

    #[test]
    fn pronoun_keys_are_exactly_three() {
        let json = r#"[{"entity_id":"pita","canonical":"Pita","aliases":["Pita"],
            "pronouns":{"subject":"he","object":"him","possessive":"his","reflexive":"himself"}}]"#;
        assert!(matches!(Lexicon::from_json(json), Err(LexiconError::Parse(_))));
        let json = r#"[{"entity_id":"pita","canonical":"Pita","aliases":["Pita"],
            "pronouns":{"subject":"he","object":"him"}}]"#;
        assert!(matches!(Lexicon::from_json(json), Err(LexiconError::Parse(_))));
    }

    #[test]
    fn json_round_trip() {
        let lex = Lexicon::new(vec![entry("pita", "Pita", &["Pita", "พิธา"])]).unwrap();
        assert_eq!(Lexicon::from_json(&lex.to_json()).unwrap(), lex);
    }
}
