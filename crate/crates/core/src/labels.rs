//! Closed label sets shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Stance of a text toward its target. The declaration order is the
/// tie-break order used everywhere an argmax is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Support,
    Against,
    Neutral,
}

/// Emotional tone of a text, independent of its stance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

/// Number of stance classes.
pub const NUM_STANCES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{token}` is not a valid {kind} label")]
pub struct LabelParseError {
    pub kind: &'static str,
    pub token: String,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; NUM_STANCES] =
        [StanceLabel::Support, StanceLabel::Against, StanceLabel::Neutral];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Support => "support",
            StanceLabel::Against => "against",
            StanceLabel::Neutral => "neutral",
        }
    }

    /// One-hot encoding over the fixed label order.
    pub fn one_hot(self) -> [f64; NUM_STANCES] {
        let mut v = [0.0; NUM_STANCES];
        v[self.index()] = 1.0;
        v
    }

    /// Index of the largest entry; ties go to the earliest label.
    pub fn argmax(scores: &[f64; NUM_STANCES]) -> StanceLabel {
        let mut best = 0;
        for i in 1..NUM_STANCES {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        Self::ALL[best]
    }
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    /// The stance a sentiment-driven predictor would emit: positive maps to
    /// support, negative to against, neutral to neutral.
    pub fn mapped_stance(self) -> StanceLabel {
        match self {
            SentimentLabel::Positive => StanceLabel::Support,
            SentimentLabel::Negative => StanceLabel::Against,
            SentimentLabel::Neutral => StanceLabel::Neutral,
        }
    }

    /// True when `stance` is the polar stance this sentiment maps to.
    /// Neutral sentiment never aligns.
    pub fn aligns_with(self, stance: StanceLabel) -> bool {
        matches!(
            (self, stance),
            (SentimentLabel::Positive, StanceLabel::Support)
                | (SentimentLabel::Negative, StanceLabel::Against)
        )
    }
}

impl FromStr for StanceLabel {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "support" => Ok(StanceLabel::Support),
            "against" => Ok(StanceLabel::Against),
            "neutral" => Ok(StanceLabel::Neutral),
            _ => Err(LabelParseError {
                kind: "stance",
                token: s.to_string(),
            }),
        }
    }
}

impl FromStr for SentimentLabel {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "positive" => Ok(SentimentLabel::Positive),
            "negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            _ => Err(LabelParseError {
                kind: "sentiment",
                token: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
