use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Lexicon;
use crate::counterfactual::{find_entity_spans, find_matches, CounterfactualSet, SpanKind};
use crate::labels::NUM_STANCES;
use crate::predictor::PredictionRecord;
use crate::text::{graphemes, nfc};

pub const FEATURE_DIM: usize = 14;

/// Column order of [`FeatureVector::to_array`]; saved model files carry this
/// list and are refused when it differs.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "base_support",
    "base_against",
    "base_neutral",
    "sentiment_positive",
    "sentiment_negative",
    "sentiment_neutral",
    "sentiment_alignment",
    "cf_flip_rate",
    "cf_hist_support",
    "cf_hist_against",
    "cf_hist_neutral",
    "rationale_mentions_target",
    "rationale_polarity",
    "bias",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub base: [f64; NUM_STANCES],
    pub sentiment: [f64; 3],
    /// 1 when the base label is the one the sentiment maps to (positive and
    /// support, negative and against). Neutral never aligns.
    pub sentiment_alignment: f64,
    /// Share of scored variants whose label differs from the base label.
    pub cf_flip_rate: f64,
    /// Label distribution over the original and its scored variants.
    pub cf_label_histogram: [f64; NUM_STANCES],
    pub rationale_mentions_target: f64,
    pub rationale_polarity: f64,
    pub bias_constant: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[0..3].copy_from_slice(&self.base);
        out[3..6].copy_from_slice(&self.sentiment);
        out[6] = self.sentiment_alignment;
        out[7] = self.cf_flip_rate;
        out[8..11].copy_from_slice(&self.cf_label_histogram);
        out[11] = self.rationale_mentions_target;
        out[12] = self.rationale_polarity;
        out[13] = self.bias_constant;
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("no prediction for example `{0}`")]
    MissingPrediction(String),
    #[error("base prediction for `{0}` failed")]
    FailedBase(String),
    #[error("counterfactual: {0}")]
    Counterfactual(String),
}

#[derive(Debug, thiserror::Error)]
pub enum PolarityError {
    #[error("failed to read polarity lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed polarity lexicon: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("polarity of `{word}` must be in [-1, 1], got {value}")]
    OutOfRange { word: String, value: f64 },
    #[error("empty word in polarity lexicon")]
    EmptyWord,
}

/// Word → polarity in [-1, 1], read from a JSON object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolarityLexicon {
    words: BTreeMap<String, f64>,
}

impl PolarityLexicon {
    pub fn new(words: BTreeMap<String, f64>) -> Result<Self, PolarityError> {
        let mut normalized = BTreeMap::new();
        for (word, value) in words {
            if word.trim().is_empty() {
                return Err(PolarityError::EmptyWord);
            }
            if !(-1.0..=1.0).contains(&value) {
                return Err(PolarityError::OutOfRange { word, value });
            }
            normalized.insert(nfc(&word).to_lowercase(), value);
        }
        Ok(Self { words: normalized })
    }

    pub fn from_json(json: &str) -> Result<Self, PolarityError> {
        Self::new(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolarityError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|source| PolarityError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }

    /// Mean polarity of every lexicon word occurrence in `text`, 0 when none
    /// occurs. Matching is case-insensitive, on word boundaries for Latin
    /// script.
    pub fn score(&self, text: &str) -> f64 {
        let lower = nfc(text).to_lowercase();
        let g = graphemes(&lower);
        let (mut sum, mut n) = (0.0, 0usize);
        for (word, value) in &self.words {
            let hits = find_matches(&g, word, false).len();
            sum += value * hits as f64;
            n += hits;
        }
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).clamp(-1.0, 1.0)
        }
    }
}

pub type PredictionIndex<'a> = HashMap<&'a str, &'a PredictionRecord>;

/// Features of one original from its prediction, its variants' predictions
/// and its rationale. Failed variant predictions are left out of the
/// consistency features; a variant with no record at all is an error.
pub fn extract_features(
    set: &CounterfactualSet,
    preds: &PredictionIndex,
    lexicon: &Lexicon,
    polarity: Option<&PolarityLexicon>,
) -> Result<FeatureVector, FeatureError> {
    let original = &set.original;
    let base_record = preds
        .get(original.id.as_str())
        .ok_or_else(|| FeatureError::MissingPrediction(original.id.clone()))?;
    let base = base_record
        .argmax()
        .ok_or_else(|| FeatureError::FailedBase(original.id.clone()))?;

    let mut counts = [0usize; NUM_STANCES];
    counts[base.index()] += 1;
    let (mut flips, mut scored_variants) = (0usize, 0usize);
    for v in &set.variants {
        let record = preds
            .get(v.example.id.as_str())
            .ok_or_else(|| FeatureError::MissingPrediction(v.example.id.clone()))?;
        if let Some(label) = record.argmax() {
            scored_variants += 1;
            counts[label.index()] += 1;
            if label != base {
                flips += 1;
            }
        }
    }
    let total = (1 + scored_variants) as f64;
    let cf_flip_rate = if scored_variants == 0 {
        0.0
    } else {
        flips as f64 / scored_variants as f64
    };

    let rationale = original.rationale.as_deref().unwrap_or("");
    let mentions = find_entity_spans(rationale, lexicon, &original.target_id)
        .map_err(|e| FeatureError::Counterfactual(e.to_string()))?
        .iter()
        .any(|s| s.kind == SpanKind::Alias);

    Ok(FeatureVector {
        base: base.one_hot(),
        sentiment: original.sentiment.one_hot(),
        sentiment_alignment: if original.sentiment.aligns_with(base) { 1.0 } else { 0.0 },
        cf_flip_rate,
        cf_label_histogram: counts.map(|c| c as f64 / total),
        rationale_mentions_target: if mentions { 1.0 } else { 0.0 },
        rationale_polarity: polarity.map_or(0.0, |p| p.score(rationale)),
        bias_constant: 1.0,
    })
}
