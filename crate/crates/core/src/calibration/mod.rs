//! Post-hoc re-scoring of a frozen predictor from counterfactual
//! consistency and rationale features.
//!
//! A fitted [`CalibratorModel`] maps the [`FeatureVector`] of an original
//! example to `softmax(W f)`. Without a model, [`consensus_fallback`] keeps a
//! label only when enough of the original and variant predictions agree on
//! it, and answers neutral otherwise.

mod features;
mod train;

pub use features::{
    extract_features, FeatureError, FeatureVector, PolarityError, PolarityLexicon, PredictionIndex, FEATURE_DIM,
    FEATURE_NAMES,
};
pub use train::{
    balance_intercepts, loss_and_gradient, monotone_learning_rate_bound, softmax, train, Row, TrainConfig, TrainError, TrainOutcome,
    TrainingMetadata, Weights,
};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example, Lexicon};
use crate::counterfactual::{sets_from_corpus, CounterfactualSet};
use crate::labels::{StanceLabel, NUM_STANCES};
use crate::metrics::{FoldCalibrator, FoldError};
use crate::predictor::{index_predictions, PredictionRecord};

pub const CALIBRATED_BACKEND: &str = "thaifactual";
pub const CONSENSUS_BACKEND: &str = "thaifactual-consensus";
pub const DEFAULT_TAU: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorModel {
    pub weights: Weights,
    /// Agreement threshold for the consensus rule, in (0.5, 1].
    pub tau: f64,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model features {found:?} do not match this build's {expected:?}")]
    Manifest { expected: Vec<String>, found: Vec<String> },
    #[error("model weights have {got} values, expected {expected}")]
    Shape { got: usize, expected: usize },
    #[error("model weights are not finite")]
    NonFinite,
    #[error("tau must be in (0.5, 1], got {0}")]
    Tau(f64),
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    features: Vec<String>,
    rows: usize,
    cols: usize,
    /// Row-major, one row per stance label in label order.
    weights: Vec<f64>,
    tau: f64,
    training: TrainingMetadata,
}

pub fn check_tau(tau: f64) -> Result<(), ModelError> {
    if tau > 0.5 && tau <= 1.0 {
        Ok(())
    } else {
        Err(ModelError::Tau(tau))
    }
}

impl CalibratorModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows: NUM_STANCES,
            cols: self.weights.cols,
            weights: self.weights.data.clone(),
            tau: self.tau,
            training: self.metadata.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(json)?;
        let expected: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        if file.features != expected || file.cols != FEATURE_DIM || file.rows != NUM_STANCES {
            return Err(ModelError::Manifest {
                expected,
                found: file.features,
            });
        }
        if file.weights.len() != NUM_STANCES * FEATURE_DIM {
            return Err(ModelError::Shape {
                got: file.weights.len(),
                expected: NUM_STANCES * FEATURE_DIM,
            });
        }
        let weights = Weights {
            cols: FEATURE_DIM,
            data: file.weights,
        };
        if !weights.is_finite() {
            return Err(ModelError::NonFinite);
        }
        check_tau(file.tau)?;
        Ok(Self {
            weights,
            tau: file.tau,
            metadata: file.training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }

    /// A model that scores every class equally.
    pub fn uniform(tau: f64) -> Self {
        Self {
            weights: Weights::zeros(FEATURE_DIM),
            tau,
            metadata: TrainingMetadata {
                epochs_run: 0,
                initial_loss: 3f64.ln(),
                final_loss: 3f64.ln(),
                converged: false,
                seed: 0,
                learning_rate: 0.0,
                l2: 0.0,
                n_rows: 0,
                intercept_shift: [0.0; NUM_STANCES],
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("example `{0}` has no counterfactual set")]
    UnknownExample(String),
}

/// Re-scores one original. A failed base prediction yields a failed record.
pub fn calibrate(
    set: &CounterfactualSet,
    preds: &PredictionIndex,
    model: &CalibratorModel,
    lexicon: &Lexicon,
    polarity: Option<&PolarityLexicon>,
) -> Result<PredictionRecord, FeatureError> {
    let base_hash = preds
        .get(set.original.id.as_str())
        .map(|p| p.prompt_hash.clone())
        .unwrap_or_default();
    let features = match extract_features(set, preds, lexicon, polarity) {
        Ok(f) => f,
        Err(FeatureError::FailedBase(id)) => {
            return Ok(PredictionRecord::failed(id, "base prediction failed", CALIBRATED_BACKEND, base_hash))
        }
        Err(e) => return Err(e),
    };
    let p = model.weights.probabilities(&features.to_array());
    Ok(PredictionRecord::scored(&set.original.id, p, CALIBRATED_BACKEND, base_hash).expect("softmax is on the simplex"))
}

/// Agreement rule over the original and its scored variants: the most common
/// label (ties by label order) if its share is at least `tau`, else neutral.
pub fn consensus_fallback(set: &CounterfactualSet, preds: &PredictionIndex, tau: f64) -> PredictionRecord {
    let ids = std::iter::once(&set.original.id).chain(set.variants.iter().map(|v| &v.example.id));
    let mut counts = [0usize; NUM_STANCES];
    for id in ids {
        if let Some(label) = preds.get(id.as_str()).and_then(|p| p.argmax()) {
            counts[label.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let base_hash = preds
        .get(set.original.id.as_str())
        .map(|p| p.prompt_hash.clone())
        .unwrap_or_default();
    if total == 0 {
        return PredictionRecord::failed(&set.original.id, "no scored prediction in set", CONSENSUS_BACKEND, base_hash);
    }
    let mut best = 0;
    for k in 1..NUM_STANCES {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    let label = if counts[best] as f64 >= tau * total as f64 {
        StanceLabel::ALL[best]
    } else {
        StanceLabel::Neutral
    };
    PredictionRecord::hard(&set.original.id, label, CONSENSUS_BACKEND, base_hash)
}

/// Counterfactual sets and every prediction (originals and variants) for one
/// predictor backend.
pub struct CalibrationContext {
    sets: Vec<CounterfactualSet>,
    by_id: HashMap<String, usize>,
    predictions: Vec<PredictionRecord>,
    lexicon: Lexicon,
    polarity: Option<PolarityLexicon>,
}

impl CalibrationContext {
    pub fn new(
        sets: Vec<CounterfactualSet>,
        predictions: Vec<PredictionRecord>,
        lexicon: Lexicon,
        polarity: Option<PolarityLexicon>,
    ) -> Self {
        let by_id = sets
            .iter()
            .enumerate()
            .map(|(i, s)| (s.original.id.clone(), i))
            .collect();
        Self {
            sets,
            by_id,
            predictions,
            lexicon,
            polarity,
        }
    }

    /// From a corpus holding originals and their variants.
    pub fn from_augmented(
        corpus: &Corpus,
        predictions: Vec<PredictionRecord>,
        polarity: Option<PolarityLexicon>,
    ) -> Self {
        Self::new(sets_from_corpus(corpus), predictions, corpus.lexicon().clone(), polarity)
    }

    pub fn sets(&self) -> &[CounterfactualSet] {
        &self.sets
    }

    pub fn has_polarity(&self) -> bool {
        self.polarity.is_some()
    }

    fn set(&self, id: &str) -> Result<&CounterfactualSet, CalibrationError> {
        self.by_id
            .get(id)
            .map(|&i| &self.sets[i])
            .ok_or_else(|| CalibrationError::UnknownExample(id.to_string()))
    }

    pub fn features(&self, id: &str) -> Result<FeatureVector, CalibrationError> {
        let index = index_predictions(&self.predictions);
        Ok(extract_features(self.set(id)?, &index, &self.lexicon, self.polarity.as_ref())?)
    }

    /// Training rows for gold-labelled originals. Examples whose base
    /// prediction failed are left out.
    pub fn rows(&self, examples: &[Example]) -> Result<Vec<Row>, CalibrationError> {
        let index = index_predictions(&self.predictions);
        let mut rows = Vec::with_capacity(examples.len());
        for ex in examples.iter().filter(|e| e.is_original()) {
            match extract_features(self.set(&ex.id)?, &index, &self.lexicon, self.polarity.as_ref()) {
                Ok(f) => rows.push((f.to_array().to_vec(), ex.stance)),
                Err(FeatureError::FailedBase(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(rows)
    }

    /// Re-scores `examples` (originals) with `model`, or with the consensus
    /// rule at `tau` when there is no model.
    pub fn calibrate_examples(
        &self,
        examples: &[Example],
        model: Option<&CalibratorModel>,
        tau: f64,
    ) -> Result<Vec<PredictionRecord>, CalibrationError> {
        let index = index_predictions(&self.predictions);
        examples
            .iter()
            .filter(|e| e.is_original())
            .map(|ex| {
                let set = self.set(&ex.id)?;
                Ok(match model {
                    Some(m) => calibrate(set, &index, m, &self.lexicon, self.polarity.as_ref())?,
                    None => consensus_fallback(set, &index, tau),
                })
            })
            .collect()
    }
}

const BIAS_COLUMN: usize = FEATURE_DIM - 1;

/// Fits a re-scorer on the gold-labelled originals in `fit`. With
/// `config.balance_recall`, the intercepts are then shifted to even out
/// per-class recall on the same rows.
pub fn fit_calibrator(
    ctx: &CalibrationContext,
    fit: &[Example],
    config: &TrainConfig,
    tau: f64,
) -> Result<CalibratorModel, CalibrationError> {
    check_tau(tau)?;
    let rows = ctx.rows(fit)?;
    let mut out = train(&rows, config)?;
    if config.balance_recall {
        let shift = balance_intercepts(&out.weights, &rows, BIAS_COLUMN);
        for (k, s) in shift.iter().enumerate() {
            out.weights.data[k * FEATURE_DIM + BIAS_COLUMN] += s;
        }
        out.metadata.intercept_shift = shift;
    }
    Ok(CalibratorModel {
        weights: out.weights,
        tau,
        metadata: out.metadata,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Trained(TrainConfig),
    Consensus,
}

/// Adapter for the leave-one-entity-out protocol: fits on each fold's fit
/// slice and re-scores its held-out slice.
pub struct FoldFitter<'a> {
    pub ctx: &'a CalibrationContext,
    pub method: Method,
    pub tau: f64,
}

impl FoldCalibrator for FoldFitter<'_> {
    fn fit_predict(&self, fit: &Corpus, eval: &Corpus) -> Result<Vec<PredictionRecord>, FoldError> {
        let err = |e: CalibrationError| FoldError(e.to_string());
        let model = match self.method {
            Method::Trained(config) => Some(fit_calibrator(self.ctx, fit.examples(), &config, self.tau).map_err(err)?),
            Method::Consensus => None,
        };
        self.ctx
            .calibrate_examples(eval.examples(), model.as_ref(), self.tau)
            .map_err(err)
    }
}
