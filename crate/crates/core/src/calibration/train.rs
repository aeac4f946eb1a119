//! Multinomial logistic re-scorer trained by full-batch gradient descent.
//!
//! Loss for weights `W` (3 × d) on rows `(f_i, y_i)`:
//!
//! ```text
//! L(W) = 1/N Σ_i −log softmax(W f_i)[y_i]  +  (c/2) ‖W‖²
//! ∇L   = 1/N Σ_i (softmax(W f_i) − onehot(y_i)) f_iᵀ  +  c W
//! ```
//!
//! The data term is (½ max‖f‖²)-smooth, so the loss never increases when
//! `η ≤ 1 / (½ max_i ‖f_i‖² + c)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labels::{StanceLabel, NUM_STANCES};

/// Row-major 3 × `cols` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Weights {
    pub fn zeros(cols: usize) -> Self {
        Self {
            cols,
            data: vec![0.0; NUM_STANCES * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert_eq!(rows.len(), NUM_STANCES);
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged weight rows");
        Self {
            cols,
            data: rows.concat(),
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn logits(&self, f: &[f64]) -> [f64; NUM_STANCES] {
        assert_eq!(f.len(), self.cols, "feature length does not match weights");
        let mut z = [0.0; NUM_STANCES];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = self.row(k).iter().zip(f).map(|(w, x)| w * x).sum();
        }
        z
    }

    pub fn probabilities(&self, f: &[f64]) -> [f64; NUM_STANCES] {
        softmax(&self.logits(f))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|w| w.is_finite())
    }
}

pub fn softmax(z: &[f64; NUM_STANCES]) -> [f64; NUM_STANCES] {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - max).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| v / sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// Stop once the loss changes by less than this between epochs.
    pub tolerance: f64,
    /// After descent, shift the class intercepts to even out per-class
    /// recall on the training rows (see [`balance_intercepts`]).
    pub balance_recall: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 500,
            l2: 1e-3,
            seed: 0,
            tolerance: 1e-9,
            balance_recall: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(TrainError::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(TrainError::Config(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("empty training batch")]
    EmptyBatch,
    #[error("non-finite feature in row {0}")]
    NonFinite(usize),
    #[error("row {row} has {got} features, expected {expected}")]
    Shape { row: usize, got: usize, expected: usize },
    #[error("no `{0}` examples in the fit set; every class needs at least one")]
    MissingClass(StanceLabel),
    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate than {learning_rate}")]
    Diverged { epoch: usize, loss: f64, learning_rate: f64 },
}

pub type Row = (Vec<f64>, StanceLabel);

/// Mean cross-entropy plus `(l2/2)‖W‖²`, and its exact gradient.
pub fn loss_and_gradient(w: &Weights, batch: &[Row], l2: f64) -> Result<(f64, Weights), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut grad = Weights::zeros(w.cols);
    let mut loss = 0.0;
    for (i, (f, y)) in batch.iter().enumerate() {
        if f.len() != w.cols {
            return Err(TrainError::Shape {
                row: i,
                got: f.len(),
                expected: w.cols,
            });
        }
        if !f.iter().all(|x| x.is_finite()) {
            return Err(TrainError::NonFinite(i));
        }
        let z = w.logits(f);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss -= z[y.index()] - log_sum;
        for k in 0..NUM_STANCES {
            let p = (z[k] - log_sum).exp();
            let coeff = p - if k == y.index() { 1.0 } else { 0.0 };
            for (g, x) in grad.data[k * w.cols..(k + 1) * w.cols].iter_mut().zip(f) {
                *g += coeff * x;
            }
        }
    }
    let n = batch.len() as f64;
    loss /= n;
    for g in &mut grad.data {
        *g /= n;
    }
    if l2 != 0.0 {
        loss += 0.5 * l2 * w.data.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad.data.iter_mut().zip(&w.data) {
            *g += l2 * v;
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub converged: bool,
    pub seed: u64,
    pub learning_rate: f64,
    pub l2: f64,
    pub n_rows: usize,
    /// Intercept shift per class added after descent (all zero when
    /// balancing is off).
    #[serde(default)]
    pub intercept_shift: [f64; NUM_STANCES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: Weights,
    pub metadata: TrainingMetadata,
    /// Loss before each update, then the loss of the returned weights.
    pub loss_history: Vec<f64>,
}

fn initial_weights(cols: usize, seed: u64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Weights::zeros(cols);
    for v in &mut w.data {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        *v = (u - 0.5) * 0.02;
    }
    w
}

/// Gradient descent from a small seeded start. Returns the weights with the
/// lowest loss seen, so the final loss never exceeds the initial one.
pub fn train(rows: &[Row], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let cols = rows.first().ok_or(TrainError::EmptyBatch)?.0.len();
    for label in StanceLabel::ALL {
        if !rows.iter().any(|(_, y)| *y == label) {
            return Err(TrainError::MissingClass(label));
        }
    }
    let mut w = initial_weights(cols, config.seed);
    let mut history = Vec::with_capacity(config.epochs + 1);
    let (mut loss, mut grad) = loss_and_gradient(&w, rows, config.l2)?;
    let initial_loss = loss;
    let (mut best_w, mut best_loss) = (w.clone(), loss);
    let mut converged = false;
    let mut epochs_run = 0;
    for epoch in 1..=config.epochs {
        history.push(loss);
        for (v, g) in w.data.iter_mut().zip(&grad.data) {
            *v -= config.learning_rate * g;
        }
        let (next_loss, next_grad) = loss_and_gradient(&w, rows, config.l2)?;
        epochs_run = epoch;
        if !next_loss.is_finite() || !w.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: next_loss,
                learning_rate: config.learning_rate,
            });
        }
        let delta = (loss - next_loss).abs();
        loss = next_loss;
        grad = next_grad;
        if loss < best_loss {
            best_loss = loss;
            best_w = w.clone();
        }
        if delta < config.tolerance {
            converged = true;
            break;
        }
    }
    history.push(best_loss);
    Ok(TrainOutcome {
        weights: best_w,
        metadata: TrainingMetadata {
            epochs_run,
            initial_loss,
            final_loss: best_loss,
            converged,
            seed: config.seed,
            learning_rate: config.learning_rate,
            l2: config.l2,
            n_rows: rows.len(),
            intercept_shift: [0.0; NUM_STANCES],
        },
        loss_history: history,
    })
}

pub const BALANCE_RANGE: f64 = 2.0;
pub const BALANCE_STEP: f64 = 0.05;

/// Intercept shifts that make per-class recall on `rows` as even as
/// possible. Support is the reference class and stays at 0; against and
/// neutral move over a grid of ±`BALANCE_RANGE` in `BALANCE_STEP` steps.
/// Ties go to more correct rows, then to the smaller total shift. Column
/// `bias_col` must hold the constant-1 feature.
pub fn balance_intercepts(w: &Weights, rows: &[Row], bias_col: usize) -> [f64; NUM_STANCES] {
    assert!(rows.iter().all(|(f, _)| f[bias_col] == 1.0), "bias column must be constant 1");
    let logits: Vec<([f64; NUM_STANCES], usize)> = rows.iter().map(|(f, y)| (w.logits(f), y.index())).collect();
    let mut gold = [0usize; NUM_STANCES];
    for (_, y) in &logits {
        gold[*y] += 1;
    }
    let steps = (BALANCE_RANGE / BALANCE_STEP).round() as i64;
    let mut best: Option<(f64, usize, i64, [f64; NUM_STANCES])> = None;
    for i in -steps..=steps {
        for j in -steps..=steps {
            let shift = [0.0, i as f64 * BALANCE_STEP, j as f64 * BALANCE_STEP];
            let mut tp = [0usize; NUM_STANCES];
            for (z, y) in &logits {
                let shifted = [z[0] + shift[0], z[1] + shift[1], z[2] + shift[2]];
                if StanceLabel::argmax(&shifted).index() == *y {
                    tp[*y] += 1;
                }
            }
            let recalls: Vec<f64> = (0..NUM_STANCES)
                .filter(|k| gold[*k] > 0)
                .map(|k| tp[k] as f64 / gold[k] as f64)
                .collect();
            let mean = recalls.iter().sum::<f64>() / recalls.len() as f64;
            let var = recalls.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / recalls.len() as f64;
            let correct: usize = tp.iter().sum();
            let size = i.abs() + j.abs();
            let better = match &best {
                None => true,
                Some((bv, bc, bs, _)) => (var, std::cmp::Reverse(correct), size) < (*bv, std::cmp::Reverse(*bc), *bs),
            };
            if better {
                best = Some((var, correct, size, shift));
            }
        }
    }
    best.map(|b| b.3).unwrap_or([0.0; NUM_STANCES])
}

/// Learning rate under which the loss is guaranteed not to increase.
pub fn monotone_learning_rate_bound(rows: &[Row], l2: f64) -> f64 {
    let max_sq = rows
        .iter()
        .map(|(f, _)| f.iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    1.0 / (0.5 * max_sq + l2)
}
