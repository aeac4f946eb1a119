//! Evaluation suite: confusion counts, label-recall standard deviation
//! (RStd), sentiment-stance alignment (Bias-SSC), macro-F1 and the
//! leave-one-entity-out protocol.
//!
//! Every metric is computed exactly on integer counts as a big rational and
//! only converted to `f64` at the end, so results can be checked for exact
//! equality against independent implementations. Percentages are on the
//! 0–100 scale.

mod ood;

pub use ood::{ood_evaluate, FoldCalibrator, FoldError, OodFold, OodReport};

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::labels::{StanceLabel, NUM_STANCES};
use crate::predictor::PredictionRecord;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no prediction for example `{0}`")]
    IdMismatch(String),
    #[error("recall undefined: no gold `{0}` examples")]
    UndefinedRecall(StanceLabel),
    #[error("F1 undefined: class `{0}` absent from gold and predictions (use skip-empty-classes to average over the rest)")]
    UndefinedClass(StanceLabel),
    #[error("macro-F1 undefined: every class is empty")]
    NoClasses,
    #[error("Bias-SSC undefined: no scored examples")]
    NoScored,
    #[error("OOD evaluation: {0}")]
    Ood(String),
}

/// Gold × predicted counts over scored records. Failed records only bump
/// `failed_count`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub matrix: [[u64; NUM_STANCES]; NUM_STANCES],
    pub failed_count: u64,
}

impl ConfusionCounts {
    /// `pred[i] == None` marks a failed prediction.
    pub fn from_labels(gold: &[StanceLabel], pred: &[Option<StanceLabel>]) -> Self {
        assert_eq!(gold.len(), pred.len(), "gold and prediction lengths differ");
        let mut counts = Self::default();
        for (g, p) in gold.iter().zip(pred) {
            counts.add(*g, *p);
        }
        counts
    }

    pub fn add(&mut self, gold: StanceLabel, pred: Option<StanceLabel>) {
        match pred {
            Some(p) => self.matrix[gold.index()][p.index()] += 1,
            None => self.failed_count += 1,
        }
    }

    /// P_i: scored examples whose gold label is `label`.
    pub fn gold_total(&self, label: StanceLabel) -> u64 {
        self.matrix[label.index()].iter().sum()
    }

    pub fn predicted_total(&self, label: StanceLabel) -> u64 {
        self.matrix.iter().map(|row| row[label.index()]).sum()
    }

    pub fn true_positives(&self, label: StanceLabel) -> u64 {
        self.matrix[label.index()][label.index()]
    }

    pub fn scored(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }
}

/// Pairs each example with its prediction by id. Predictions for ids outside
/// `examples` are ignored.
pub fn align<'a>(
    examples: &'a [Example],
    preds: &'a [PredictionRecord],
) -> Result<Vec<(&'a Example, &'a PredictionRecord)>, MetricsError> {
    let by_id: HashMap<&str, &PredictionRecord> = preds.iter().map(|p| (p.example_id.as_str(), p)).collect();
    examples
        .iter()
        .map(|ex| {
            by_id
                .get(ex.id.as_str())
                .map(|p| (ex, *p))
                .ok_or_else(|| MetricsError::IdMismatch(ex.id.clone()))
        })
        .collect()
}

pub fn confusion_counts(examples: &[Example], preds: &[PredictionRecord]) -> Result<ConfusionCounts, MetricsError> {
    let mut counts = ConfusionCounts::default();
    for (ex, p) in align(examples, preds)? {
        counts.add(ex.stance, p.argmax());
    }
    Ok(counts)
}

fn ratio(num: u64, den: u64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("bounded rational converts")
}

/// `100 · r` as the nearest `f64`.
pub fn percent(r: &BigRational) -> f64 {
    to_f64(&(r * BigInt::from(100)))
}

/// Per-class recalls TP_i / P_i.
pub fn recalls(counts: &ConfusionCounts) -> Result<[BigRational; NUM_STANCES], MetricsError> {
    let mut out: [BigRational; NUM_STANCES] = Default::default();
    for label in StanceLabel::ALL {
        let total = counts.gold_total(label);
        if total == 0 {
            return Err(MetricsError::UndefinedRecall(label));
        }
        out[label.index()] = ratio(counts.true_positives(label), total);
    }
    Ok(out)
}

/// Population variance of the three recalls, exactly.
pub fn recall_variance(counts: &ConfusionCounts) -> Result<BigRational, MetricsError> {
    let r = recalls(counts)?;
    let k = BigInt::from(NUM_STANCES);
    let mean = r.iter().fold(BigRational::zero(), |acc, x| acc + x) / k.clone();
    let sum_sq = r.iter().fold(BigRational::zero(), |acc, x| {
        let d = x - &mean;
        acc + &d * &d
    });
    Ok(sum_sq / k)
}

/// RStd in percent: `100 · sqrt(variance)`.
pub fn rstd(counts: &ConfusionCounts) -> Result<f64, MetricsError> {
    Ok(100.0 * to_f64(&recall_variance(counts)?).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroF1 {
    pub value: BigRational,
    /// Classes left out of the average because they never occur.
    pub skipped: Vec<StanceLabel>,
}

/// Per-class F1 as `2TP / (2TP + FP + FN)`; `None` when the class never
/// occurs in gold or predictions.
pub fn class_f1(counts: &ConfusionCounts, label: StanceLabel) -> Option<BigRational> {
    let tp = counts.true_positives(label);
    let fp = counts.predicted_total(label) - tp;
    let fn_ = counts.gold_total(label) - tp;
    let den = 2 * tp + fp + fn_;
    (den > 0).then(|| ratio(2 * tp, den))
}

pub fn macro_f1_exact(counts: &ConfusionCounts, skip_empty_classes: bool) -> Result<MacroF1, MetricsError> {
    let mut sum = BigRational::zero();
    let mut used = 0u64;
    let mut skipped = Vec::new();
    for label in StanceLabel::ALL {
        match class_f1(counts, label) {
            Some(f1) => {
                sum += f1;
                used += 1;
            }
            None if skip_empty_classes => skipped.push(label),
            None => return Err(MetricsError::UndefinedClass(label)),
        }
    }
    if used == 0 {
        return Err(MetricsError::NoClasses);
    }
    Ok(MacroF1 {
        value: sum / BigInt::from(used),
        skipped,
    })
}

pub fn macro_f1(counts: &ConfusionCounts) -> Result<f64, MetricsError> {
    Ok(percent(&macro_f1_exact(counts, false)?.value))
}

/// Share of scored examples whose predicted stance is the one their
/// sentiment maps to (positive/support, negative/against). With
/// `exclude_neutral`, neutral-sentiment examples leave the denominator.
pub fn bias_ssc_exact(
    examples: &[Example],
    preds: &[PredictionRecord],
    exclude_neutral: bool,
) -> Result<BigRational, MetricsError> {
    let mut hits = 0u64;
    let mut n = 0u64;
    for (ex, p) in align(examples, preds)? {
        let Some(label) = p.argmax() else { continue };
        if exclude_neutral && ex.sentiment == crate::labels::SentimentLabel::Neutral {
            continue;
        }
        n += 1;
        if ex.sentiment.aligns_with(label) {
            hits += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::NoScored);
    }
    Ok(ratio(hits, n))
}

pub fn bias_ssc(examples: &[Example], preds: &[PredictionRecord]) -> Result<f64, MetricsError> {
    Ok(percent(&bias_ssc_exact(examples, preds, false)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub skip_empty_classes: bool,
    pub ssc_exclude_neutral: bool,
}

/// Per-entity diagnostics; a metric is `None` when undefined on the slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub bias_ssc: Option<f64>,
    pub rstd: Option<f64>,
    pub macro_f1: Option<f64>,
    pub recalls: Option<[f64; NUM_STANCES]>,
    pub n_scored: u64,
    pub n_failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bias_ssc: f64,
    pub rstd: f64,
    pub macro_f1: f64,
    pub ood_macro_f1: Option<f64>,
    pub per_entity_breakdown: BTreeMap<String, EntityMetrics>,
    pub confusion: ConfusionCounts,
    pub n_scored: u64,
    pub n_failed: u64,
    pub notes: Vec<String>,
}

struct Headline {
    bias_ssc: f64,
    rstd: f64,
    macro_f1: f64,
    skipped: Vec<StanceLabel>,
}

fn headline(
    examples: &[Example],
    preds: &[PredictionRecord],
    counts: &ConfusionCounts,
    options: MetricOptions,
) -> Result<Headline, MetricsError> {
    let f1 = macro_f1_exact(counts, options.skip_empty_classes)?;
    Ok(Headline {
        bias_ssc: percent(&bias_ssc_exact(examples, preds, options.ssc_exclude_neutral)?),
        rstd: rstd(counts)?,
        macro_f1: percent(&f1.value),
        skipped: f1.skipped,
    })
}

/// Pooled headline metrics over `examples` plus a per-entity breakdown.
/// Counterfactual examples should be filtered out by the caller; only gold
/// labelled originals are meaningful here.
pub fn evaluate(
    examples: &[Example],
    preds: &[PredictionRecord],
    options: MetricOptions,
) -> Result<MetricReport, MetricsError> {
    let counts = confusion_counts(examples, preds)?;
    let h = headline(examples, preds, &counts, options)?;

    let mut by_entity: BTreeMap<&str, Vec<Example>> = BTreeMap::new();
    for ex in examples {
        by_entity.entry(ex.target_id.as_str()).or_default().push(ex.clone());
    }
    let mut per_entity_breakdown = BTreeMap::new();
    for (entity, slice) in by_entity {
        let c = confusion_counts(&slice, preds)?;
        per_entity_breakdown.insert(
            entity.to_string(),
            EntityMetrics {
                bias_ssc: bias_ssc_exact(&slice, preds, options.ssc_exclude_neutral)
                    .ok()
                    .map(|r| percent(&r)),
                rstd: rstd(&c).ok(),
                macro_f1: macro_f1_exact(&c, options.skip_empty_classes)
                    .ok()
                    .map(|m| percent(&m.value)),
                recalls: recalls(&c).ok().map(|r| [percent(&r[0]), percent(&r[1]), percent(&r[2])]),
                n_scored: c.scored(),
                n_failed: c.failed_count,
            },
        );
    }

    let mut notes = Vec::new();
    if !h.skipped.is_empty() {
        let names: Vec<&str> = h.skipped.iter().map(|l| l.as_str()).collect();
        notes.push(format!("macro-F1 skips empty classes: {}", names.join(", ")));
    }
    if options.ssc_exclude_neutral {
        notes.push("Bias-SSC excludes neutral-sentiment examples".to_string());
    }
    if counts.failed_count > 0 {
        notes.push(format!("{} failed predictions excluded", counts.failed_count));
    }
    Ok(MetricReport {
        bias_ssc: h.bias_ssc,
        rstd: h.rstd,
        macro_f1: h.macro_f1,
        ood_macro_f1: None,
        per_entity_breakdown,
        confusion: counts,
        n_scored: counts.scored(),
        n_failed: counts.failed_count,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Provenance;
    use crate::labels::SentimentLabel;
    use StanceLabel::{Against as A, Neutral as N, Support as S};

    fn counts_from(gold: &[StanceLabel], pred: &[StanceLabel]) -> ConfusionCounts {
        let pred: Vec<Option<StanceLabel>> = pred.iter().copied().map(Some).collect();
        ConfusionCounts::from_labels(gold, &pred)
    }

    /// Counts whose recalls are exactly `hits[i] / 10`.
    fn with_recalls(hits: [u64; 3]) -> ConfusionCounts {
        let mut c = ConfusionCounts::default();
        for (i, h) in hits.into_iter().enumerate() {
            c.matrix[i][i] = h;
            c.matrix[i][(i + 1) % 3] = 10 - h;
        }
        c
    }

    fn example(id: &str, stance: StanceLabel, sentiment: SentimentLabel) -> Example {
        Example {
            id: id.into(),
            text: format!("text {id}"),
            target_id: "pita".into(),
            stance,
            sentiment,
            rationale: None,
            bias_markers: None,
            provenance: Provenance::Original,
            source_id: None,
            stance_unverified: false,
        }
    }

    #[test]
    fn hand_tabulated_confusion() {
        let c = counts_from(&[S, S, A, A, N, N], &[S, A, A, A, N, S]);
        assert_eq!(c.matrix, [[1, 1, 0], [0, 2, 0], [1, 0, 1]]);
        assert_eq!(c.gold_total(S), 2);
    }

    #[test]
    fn empty_and_perfect_confusion() {
        assert_eq!(ConfusionCounts::from_labels(&[], &[]).matrix, [[0; 3]; 3]);
        let c = counts_from(&[S, A, N, N], &[S, A, N, N]);
        assert_eq!(c.matrix, [[1, 0, 0], [0, 1, 0], [0, 0, 2]]);
    }

    #[test]
    fn failed_records_counted_separately() {
        let c = ConfusionCounts::from_labels(&[S, A], &[Some(S), None]);
        assert_eq!(c.failed_count, 1);
        assert_eq!(c.scored(), 1);
    }

    #[test]
    fn rstd_hand_cases() {
        assert!((rstd(&with_recalls([10, 5, 0])).unwrap() - 40.82).abs() < 0.01);
        assert!((rstd(&with_recalls([10, 10, 4])).unwrap() - 28.28).abs() < 0.01);
        assert_eq!(rstd(&with_recalls([7, 7, 7])).unwrap(), 0.0);
        assert_eq!(recall_variance(&with_recalls([10, 5, 0])).unwrap(), ratio(1, 6));
    }

    #[test]
    fn rstd_names_empty_class() {
        let c = counts_from(&[S, A], &[S, A]);
        assert_eq!(rstd(&c), Err(MetricsError::UndefinedRecall(N)));
    }

    #[test]
    fn macro_f1_hand_case() {
        let c = counts_from(&[S, S, A, A, N, N], &[S, A, A, A, N, S]);
        let f1 = macro_f1_exact(&c, false).unwrap();
        // (1/2 + 4/5 + 2/3) / 3
        assert_eq!(f1.value, ratio(59, 90));
        assert!((macro_f1(&c).unwrap() - 65.56).abs() < 0.01);
        assert_eq!(macro_f1(&counts_from(&[S, A, N], &[S, A, N])).unwrap(), 100.0);
    }

    #[test]
    fn macro_f1_empty_class() {
        let c = counts_from(&[S, A], &[S, S]);
        assert_eq!(macro_f1_exact(&c, false), Err(MetricsError::UndefinedClass(N)));
        let skipped = macro_f1_exact(&c, true).unwrap();
        assert_eq!(skipped.skipped, vec![N]);
        // support F1 = 2/3, against F1 = 0
        assert_eq!(skipped.value, ratio(1, 3));
    }

    #[test]
    fn bias_ssc_hand_case() {
        use SentimentLabel::*;
        let exs = vec![
            example("1", N, Positive),
            example("2", N, Positive),
            example("3", N, Negative),
            example("4", N, SentimentLabel::Neutral),
        ];
        let preds: Vec<PredictionRecord> = [S, A, A, N]
            .iter()
            .zip(&exs)
            .map(|(l, e)| PredictionRecord::hard(&e.id, *l, "t", ""))
            .collect();
        assert_eq!(bias_ssc(&exs, &preds).unwrap(), 50.0);
        assert_eq!(bias_ssc_exact(&exs, &preds, true).unwrap(), ratio(2, 3));
        let neutral: Vec<PredictionRecord> = exs.iter().map(|e| PredictionRecord::hard(&e.id, N, "t", "")).collect();
        assert_eq!(bias_ssc(&exs, &neutral).unwrap(), 0.0);
    }

    #[test]
    fn bias_ssc_needs_scored_examples() {
        let exs = vec![example("1", S, SentimentLabel::Positive)];
        let preds = vec![PredictionRecord::failed("1", "timeout", "t", "")];
        assert_eq!(bias_ssc(&exs, &preds), Err(MetricsError::NoScored));
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let exs = vec![example("1", S, SentimentLabel::Positive)];
        assert_eq!(confusion_counts(&exs, &[]), Err(MetricsError::IdMismatch("1".into())));
    }

    #[test]
    fn report_breaks_down_by_entity() {
        let mut exs = Vec::new();
        for (i, l) in [S, A, N, S, A, N].into_iter().enumerate() {
            let mut e = example(&i.to_string(), l, SentimentLabel::Neutral);
            if i >= 3 {
                e.target_id = "thaksin".into();
            }
            exs.push(e);
        }
        let preds: Vec<PredictionRecord> = exs.iter().map(|e| PredictionRecord::hard(&e.id, e.stance, "t", "")).collect();
        let report = evaluate(&exs, &preds, MetricOptions::default()).unwrap();
        assert_eq!(report.macro_f1, 100.0);
        assert_eq!(report.rstd, 0.0);
        assert_eq!(report.n_scored, 6);
        assert_eq!(report.per_entity_breakdown.len(), 2);
        assert_eq!(report.per_entity_breakdown["thaksin"].macro_f1, Some(100.0));
    }
}
