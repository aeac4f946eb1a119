use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{confusion_counts, macro_f1_exact, percent, MetricOptions, MetricsError};
use crate::corpus::{leave_one_entity_out_split, Corpus};
use crate::predictor::PredictionRecord;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct FoldError(pub String);

/// Something that can be fitted on one slice of a corpus and then score
/// another. `fit` holds gold-labelled originals only; the returned records
/// must cover every example of `eval`.
pub trait FoldCalibrator {
    fn fit_predict(&self, fit: &Corpus, eval: &Corpus) -> Result<Vec<PredictionRecord>, FoldError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodFold {
    /// `None` when the held-out slice is empty.
    pub macro_f1: Option<f64>,
    pub fit_size: usize,
    pub eval_size: usize,
    #[serde(skip)]
    pub fit_ids: Vec<String>,
    #[serde(skip)]
    pub eval_ids: Vec<String>,
    /// Predictions scored on the held-out slice.
    #[serde(skip)]
    pub predictions: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub folds: BTreeMap<String, OodFold>,
    /// Mean over folds with a defined macro-F1.
    pub mean_macro_f1: f64,
}

impl OodReport {
    /// Held-out predictions of every fold, in fold order.
    pub fn pooled_predictions(&self) -> Vec<PredictionRecord> {
        self.folds.values().flat_map(|f| f.predictions.iter().cloned()).collect()
    }
}

/// Leave-one-entity-out evaluation over the originals of `corpus`. Without a
/// calibrator the held-out slice is scored with `predictions` as given.
pub fn ood_evaluate(
    corpus: &Corpus,
    predictions: &[PredictionRecord],
    calibrator: Option<&dyn FoldCalibrator>,
    options: MetricOptions,
) -> Result<OodReport, MetricsError> {
    let originals = corpus.originals();
    let mut entities: Vec<&str> = originals.lexicon().ids().collect();
    entities.sort_unstable();

    let mut folds = BTreeMap::new();
    for entity in entities {
        let (fit, eval) =
            leave_one_entity_out_split(&originals, entity).map_err(|e| MetricsError::Ood(e.to_string()))?;
        let fit_ids: Vec<String> = fit.examples().iter().map(|e| e.id.clone()).collect();
        let eval_ids: Vec<String> = eval.examples().iter().map(|e| e.id.clone()).collect();
        let fit_set: HashSet<&str> = fit_ids.iter().map(String::as_str).collect();
        assert!(
            eval_ids.iter().all(|id| !fit_set.contains(id.as_str())),
            "held-out example leaked into the fit slice of fold `{entity}`"
        );
        assert_eq!(fit_ids.len() + eval_ids.len(), originals.len());

        let fold_preds = match calibrator {
            Some(c) => c
                .fit_predict(&fit, &eval)
                .map_err(|e| MetricsError::Ood(format!("fold `{entity}`: {e}")))?,
            None => super::align(eval.examples(), predictions)?
                .into_iter()
                .map(|(_, p)| p.clone())
                .collect(),
        };
        let macro_f1 = if eval.is_empty() {
            None
        } else {
            let counts = confusion_counts(eval.examples(), &fold_preds)?;
            Some(percent(&macro_f1_exact(&counts, options.skip_empty_classes)?.value))
        };
        folds.insert(
            entity.to_string(),
            OodFold {
                macro_f1,
                fit_size: fit_ids.len(),
                eval_size: eval_ids.len(),
                fit_ids,
                eval_ids,
                predictions: fold_preds,
            },
        );
    }
    let defined: Vec<f64> = folds.values().filter_map(|f| f.macro_f1).collect();
    if defined.is_empty() {
        return Err(MetricsError::Ood("no fold has a non-empty held-out slice".into()));
    }
    let mean_macro_f1 = defined.iter().sum::<f64>() / defined.len() as f64;
    Ok(OodReport { folds, mean_macro_f1 })
}
