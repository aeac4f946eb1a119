//! Fleiss' kappa over stance annotations.

use std::fs;
use std::path::Path;

use num_rational::Ratio;
use serde::Deserialize;

use crate::labels::{StanceLabel, NUM_STANCES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    items: Vec<(String, Vec<StanceLabel>)>,
    annotator_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum AgreementError {
    #[error("failed to read annotations {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed annotation record: {message}")]
    Parse { line: usize, message: String },
    #[error("agreement needs at least 2 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("agreement needs at least one item")]
    NoItems,
    #[error("item `{item}` has {got} labels, expected {expected}")]
    Ragged {
        item: String,
        got: usize,
        expected: usize,
    },
    /// Every label fell in a single category, so chance agreement is 1 and
    /// kappa is 0/0.
    #[error("undefined agreement: all annotations fall in one category")]
    Undefined,
}

impl AnnotationSet {
    pub fn new(items: Vec<(String, Vec<StanceLabel>)>, annotator_count: usize) -> Result<Self, AgreementError> {
        if annotator_count < 2 {
            return Err(AgreementError::TooFewAnnotators(annotator_count));
        }
        if items.is_empty() {
            return Err(AgreementError::NoItems);
        }
        for (item, labels) in &items {
            if labels.len() != annotator_count {
                return Err(AgreementError::Ragged {
                    item: item.clone(),
                    got: labels.len(),
                    expected: annotator_count,
                });
            }
        }
        Ok(Self { items, annotator_count })
    }

    /// Annotator count is taken from the first item.
    pub fn from_items(items: Vec<(String, Vec<StanceLabel>)>) -> Result<Self, AgreementError> {
        let n = items.first().map(|(_, l)| l.len()).ok_or(AgreementError::NoItems)?;
        Self::new(items, n)
    }

    pub fn items(&self) -> &[(String, Vec<StanceLabel>)] {
        &self.items
    }

    pub fn annotator_count(&self) -> usize {
        self.annotator_count
    }
}

#[derive(Deserialize)]
struct AnnotationLine {
    item_id: String,
    labels: Vec<StanceLabel>,
}

/// Reads JSON lines of `{"item_id": ..., "labels": [...]}`.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet, AgreementError> {
    let path = path.as_ref();
    let data = fs::read_to_string(path).map_err(|source| AgreementError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    for (idx, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationLine = serde_json::from_str(line).map_err(|e| AgreementError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push((rec.item_id, rec.labels));
    }
    AnnotationSet::from_items(items)
}

/// Exact kappa as a ratio of integers.
///
/// With N items, n annotators, `n_ij` votes for category j on item i and
/// `c_j` total votes for j: observed agreement is `A / D` with
/// `A = sum n_ij (n_ij - 1)` and `D = N n (n - 1)`; chance agreement is
/// `S / T` with `S = sum c_j^2` and `T = (N n)^2`.
pub fn fleiss_kappa_ratio(annotations: &AnnotationSet) -> Result<Ratio<i128>, AgreementError> {
    let n = annotations.annotator_count as i128;
    let items = annotations.items.len() as i128;
    let mut observed = 0i128;
    let mut totals = [0i128; NUM_STANCES];
    for (_, labels) in &annotations.items {
        let mut counts = [0i128; NUM_STANCES];
        for l in labels {
            counts[l.index()] += 1;
        }
        for (j, c) in counts.iter().enumerate() {
            observed += c * (c - 1);
            totals[j] += c;
        }
    }
    let pair_total = items * n * (n - 1);
    let chance_num: i128 = totals.iter().map(|c| c * c).sum();
    let chance_den = (items * n) * (items * n);
    if chance_num == chance_den {
        return Err(AgreementError::Undefined);
    }
    Ok(Ratio::new(
        observed * chance_den - chance_num * pair_total,
        pair_total * (chance_den - chance_num),
    ))
}

pub fn fleiss_kappa(annotations: &AnnotationSet) -> Result<f64, AgreementError> {
    let r = fleiss_kappa_ratio(annotations)?;
    Ok(*r.numer() as f64 / *r.denom() as f64)
}
