//! Entity-substituted counterfactuals.
//!
//! A variant swaps every mention of the example's target (its aliases and
//! its third-person pronouns) for another entity and leaves every other
//! grapheme untouched, so the sentiment-bearing words stay exactly where they
//! were. Offsets are grapheme-cluster offsets into NFC text.
//!
//! Matching rules:
//! * aliases match exactly; pronouns match case-insensitively;
//! * a Latin-script match must sit on word boundaries (`Pita` does not match
//!   inside `Pitak`, `his` not inside `history`); Thai has no inter-word
//!   spacing, so no boundary is required next to Thai characters;
//! * overlapping alias matches resolve longest first, leftmost on ties;
//! * pronouns never overlap an alias span.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusError, EntityEntry, Example, Lexicon, Provenance};
use crate::text::{capitalize_first, graphemes, is_latin_word_grapheme, lowercase_first, starts_uppercase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    Alias,
    PronounSubject,
    PronounObject,
    PronounPossessive,
}

impl SpanKind {
    pub fn is_pronoun(self) -> bool {
        self != SpanKind::Alias
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub matched_alias: String,
    pub entity_id: String,
    pub kind: SpanKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualVariant {
    pub example: Example,
    pub swapped_from: String,
    pub swapped_to: String,
    /// Replaced spans, in original-text offsets.
    pub edited_spans: Vec<EntitySpan>,
    /// The replacements, in variant-text offsets (parallel to `edited_spans`).
    pub variant_spans: Vec<EntitySpan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterfactualSet {
    pub original: Example,
    pub variants: Vec<CounterfactualVariant>,
}

impl CounterfactualSet {
    /// A set with no variants, for examples that never mention their target.
    pub fn degenerate(original: Example) -> Self {
        Self {
            original,
            variants: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CounterfactualError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("example `{id}` already targets `{entity}`; a swap needs a different entity")]
    IdentitySwap { id: String, entity: String },
    #[error("example `{0}` is itself a counterfactual")]
    NotOriginal(String),
    #[error("example `{id}` never mentions its target `{target}`")]
    NoMention { id: String, target: String },
}

pub fn variant_id(source_id: &str, to: &str) -> String {
    format!("{source_id}__cf__{to}")
}

/// Words after which an ambiguous object/possessive pronoun ("her") reads as
/// an object: "told her the truth", "supports her again".
const OBJECT_FOLLOWERS: &[&str] = &[
    "a", "about", "after", "again", "all", "an", "and", "anymore", "are", "as", "at", "back",
    "because", "before", "but", "by", "can", "could", "down", "enough", "for", "from", "here",
    "if", "in", "into", "is", "just", "more", "now", "of", "off", "on", "once", "or", "out",
    "over", "should", "so", "than", "that", "the", "then", "there", "these", "this", "those",
    "to", "today", "too", "up", "very", "was", "were", "when", "while", "will", "with", "would",
    "yet",
];

fn boundary_ok(g: &[&str], start: usize, end: usize) -> bool {
    let left_ok = start == 0 || !(is_latin_word_grapheme(g[start - 1]) && is_latin_word_grapheme(g[start]));
    let right_ok = end == g.len() || !(is_latin_word_grapheme(g[end - 1]) && is_latin_word_grapheme(g[end]));
    left_ok && right_ok
}

pub(crate) fn find_matches(g: &[&str], needle: &str, case_insensitive: bool) -> Vec<(usize, usize)> {
    let n = graphemes(needle);
    if n.is_empty() || n.len() > g.len() {
        return Vec::new();
    }
    let needle_lower = needle.to_lowercase();
    let mut out = Vec::new();
    for start in 0..=g.len() - n.len() {
        let end = start + n.len();
        let hit = if case_insensitive {
            g[start..end].concat().to_lowercase() == needle_lower
        } else {
            g[start..end] == n[..]
        };
        if hit && boundary_ok(g, start, end) {
            out.push((start, end));
        }
    }
    out
}

fn next_word(g: &[&str], end: usize) -> Option<String> {
    let mut i = end;
    if i >= g.len() || !g[i].chars().all(char::is_whitespace) {
        return None;
    }
    while i < g.len() && g[i].chars().all(char::is_whitespace) {
        i += 1;
    }
    let start = i;
    while i < g.len() && is_latin_word_grapheme(g[i]) {
        i += 1;
    }
    (i > start).then(|| g[start..i].concat().to_lowercase())
}

fn pronoun_kind(entry: &EntityEntry, form_lower: &str, g: &[&str], end: usize) -> SpanKind {
    let p = &entry.pronouns;
    let slots = [
        (SpanKind::PronounSubject, p.subject.to_lowercase()),
        (SpanKind::PronounObject, p.object.to_lowercase()),
        (SpanKind::PronounPossessive, p.possessive.to_lowercase()),
    ];
    let kinds: Vec<SpanKind> = slots.iter().filter(|(_, f)| f == form_lower).map(|(k, _)| *k).collect();
    if kinds.contains(&SpanKind::PronounObject) && kinds.contains(&SpanKind::PronounPossessive) {
        return match next_word(g, end) {
            Some(w) if !OBJECT_FOLLOWERS.contains(&w.as_str()) => SpanKind::PronounPossessive,
            _ => SpanKind::PronounObject,
        };
    }
    kinds[0]
}

fn find_spans_for(text: &str, entry: &EntityEntry, include_pronouns: bool) -> Vec<EntitySpan> {
    let g = graphemes(text);

    let mut candidates: Vec<(usize, usize, &str)> = Vec::new();
    for alias in &entry.aliases {
        for (s, e) in find_matches(&g, alias, false) {
            candidates.push((s, e, alias));
        }
    }
    candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut spans = Vec::new();
    for (s, e, alias) in candidates {
        if taken.iter().all(|&(ts, te)| e <= ts || s >= te) {
            taken.push((s, e));
            spans.push(EntitySpan {
                start: s,
                end: e,
                matched_alias: alias.to_string(),
                entity_id: entry.entity_id.clone(),
                kind: SpanKind::Alias,
            });
        }
    }

    if include_pronouns {
        let p = &entry.pronouns;
        let mut forms: Vec<String> = vec![p.subject.to_lowercase(), p.object.to_lowercase(), p.possessive.to_lowercase()];
        forms.sort();
        forms.dedup();
        // longest form first so e.g. "hers" is not split as "her"+"s"
        forms.sort_by_key(|f| std::cmp::Reverse(f.len()));
        for form in &forms {
            for (s, e) in find_matches(&g, form, true) {
                if taken.iter().all(|&(ts, te)| e <= ts || s >= te) {
                    taken.push((s, e));
                    spans.push(EntitySpan {
                        start: s,
                        end: e,
                        matched_alias: g[s..e].concat(),
                        entity_id: entry.entity_id.clone(),
                        kind: pronoun_kind(entry, form, &g, e),
                    });
                }
            }
        }
    }

    spans.sort_by_key(|s| s.start);
    spans
}

/// All mentions of `target` in `text`: alias spans plus the target's
/// pronouns, sorted by start offset.
pub fn find_entity_spans(text: &str, lexicon: &Lexicon, target: &str) -> Result<Vec<EntitySpan>, CounterfactualError> {
    let entry = lexicon
        .get(target)
        .ok_or_else(|| CounterfactualError::UnknownEntity(target.to_string()))?;
    Ok(find_spans_for(text, entry, true))
}

fn replacement_for(span: &EntitySpan, to: &EntityEntry) -> String {
    let base = match span.kind {
        SpanKind::Alias => to.canonical.clone(),
        SpanKind::PronounSubject => to.pronouns.subject.clone(),
        SpanKind::PronounObject => to.pronouns.object.clone(),
        SpanKind::PronounPossessive => to.pronouns.possessive.clone(),
    };
    if starts_uppercase(&span.matched_alias) {
        capitalize_first(&base)
    } else if span.kind.is_pronoun() {
        lowercase_first(&base)
    } else {
        base
    }
}

/// Rewrites `spans` of `text` for entity `to`. Returns the new text and the
/// replacement spans in new-text offsets.
fn rewrite(text: &str, spans: &[EntitySpan], to: &EntityEntry) -> (String, Vec<EntitySpan>) {
    let g = graphemes(text);
    let mut out = String::with_capacity(text.len());
    let mut out_len = 0usize;
    let mut cursor = 0usize;
    let mut new_spans = Vec::with_capacity(spans.len());
    for span in spans {
        for piece in &g[cursor..span.start] {
            out.push_str(piece);
        }
        out_len += span.start - cursor;
        let replacement = replacement_for(span, to);
        let len = crate::text::grapheme_len(&replacement);
        out.push_str(&replacement);
        new_spans.push(EntitySpan {
            start: out_len,
            end: out_len + len,
            matched_alias: replacement,
            entity_id: to.entity_id.clone(),
            kind: span.kind,
        });
        out_len += len;
        cursor = span.end;
    }
    for piece in &g[cursor..] {
        out.push_str(piece);
    }
    (out, new_spans)
}

/// Swaps the example's target for `to`. Labels are copied and the stance is
/// flagged unverified. The rationale, when present, gets the same rewrite.
pub fn substitute_entity(example: &Example, lexicon: &Lexicon, to: &str) -> Result<CounterfactualVariant, CounterfactualError> {
    if example.provenance != Provenance::Original {
        return Err(CounterfactualError::NotOriginal(example.id.clone()));
    }
    let from_entry = lexicon
        .get(&example.target_id)
        .ok_or_else(|| CounterfactualError::UnknownEntity(example.target_id.clone()))?;
    let to_entry = lexicon
        .get(to)
        .ok_or_else(|| CounterfactualError::UnknownEntity(to.to_string()))?;
    if to == example.target_id {
        return Err(CounterfactualError::IdentitySwap {
            id: example.id.clone(),
            entity: to.to_string(),
        });
    }
    let spans = find_spans_for(&example.text, from_entry, true);
    if !spans.iter().any(|s| s.kind == SpanKind::Alias) {
        return Err(CounterfactualError::NoMention {
            id: example.id.clone(),
            target: example.target_id.clone(),
        });
    }
    let (text, variant_spans) = rewrite(&example.text, &spans, to_entry);
    let rationale = example.rationale.as_ref().map(|r| {
        let r_spans = find_spans_for(r, from_entry, true);
        rewrite(r, &r_spans, to_entry).0
    });

    Ok(CounterfactualVariant {
        example: Example {
            id: variant_id(&example.id, to),
            text,
            target_id: to.to_string(),
            stance: example.stance,
            sentiment: example.sentiment,
            rationale,
            bias_markers: example.bias_markers,
            provenance: Provenance::Counterfactual,
            source_id: Some(example.id.clone()),
            stance_unverified: true,
        },
        swapped_from: example.target_id.clone(),
        swapped_to: to.to_string(),
        edited_spans: spans,
        variant_spans,
    })
}

/// One variant per other lexicon entity, in lexicon order.
pub fn generate_counterfactual_set(example: &Example, lexicon: &Lexicon) -> Result<CounterfactualSet, CounterfactualError> {
    let variants = lexicon
        .ids()
        .filter(|id| *id != example.target_id)
        .map(|to| substitute_entity(example, lexicon, to))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CounterfactualSet {
        original: example.clone(),
        variants,
    })
}

/// Replaces every alias of the target with its canonical name. Pronouns are
/// left alone.
pub fn canonicalize_text(text: &str, lexicon: &Lexicon, target: &str) -> Result<String, CounterfactualError> {
    let entry = lexicon
        .get(target)
        .ok_or_else(|| CounterfactualError::UnknownEntity(target.to_string()))?;
    let spans = find_spans_for(text, entry, false);
    Ok(rewrite(text, &spans, entry).0)
}

/// Result of augmenting a whole corpus.
#[derive(Debug, Clone)]
pub struct Augmented {
    /// Originals with their variants immediately after them.
    pub corpus: Corpus,
    pub sets: Vec<CounterfactualSet>,
    /// Originals that never mention their target and got no variants.
    pub skipped: Vec<String>,
}

/// Generates variants for every original example. Examples without a
/// mention are kept, get an empty set and are listed in `skipped`.
pub fn augment_corpus(corpus: &Corpus) -> Result<Augmented, AugmentError> {
    let lexicon = corpus.lexicon();
    let mut examples = Vec::new();
    let mut sets = Vec::new();
    let mut skipped = Vec::new();
    for ex in corpus.examples().iter().filter(|e| e.is_original()) {
        let set = match generate_counterfactual_set(ex, lexicon) {
            Ok(set) => set,
            Err(CounterfactualError::NoMention { id, .. }) => {
                skipped.push(id);
                CounterfactualSet::degenerate(ex.clone())
            }
            Err(e) => return Err(e.into()),
        };
        examples.push(ex.clone());
        examples.extend(set.variants.iter().map(|v| v.example.clone()));
        sets.push(set);
    }
    Ok(Augmented {
        corpus: Corpus::new(examples, lexicon.clone())?,
        sets,
        skipped,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error(transparent)]
    Counterfactual(#[from] CounterfactualError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Rebuilds counterfactual sets from a corpus that already holds variants
/// (for example an augmented file on disk). Originals without variants get
/// empty sets.
pub fn sets_from_corpus(corpus: &Corpus) -> Vec<CounterfactualSet> {
    let mut sets: Vec<CounterfactualSet> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for ex in corpus.examples().iter().filter(|e| e.is_original()) {
        index.insert(ex.id.clone(), sets.len());
        sets.push(CounterfactualSet::degenerate(ex.clone()));
    }
    for ex in corpus.examples().iter().filter(|e| !e.is_original()) {
        let Some(&slot) = ex.source_id.as_ref().and_then(|s| index.get(s)) else {
            continue;
        };
        let swapped_from = sets[slot].original.target_id.clone();
        sets[slot].variants.push(CounterfactualVariant {
            swapped_from,
            swapped_to: ex.target_id.clone(),
            example: ex.clone(),
            edited_spans: Vec::new(),
            variant_spans: Vec::new(),
        });
    }
    sets
}
