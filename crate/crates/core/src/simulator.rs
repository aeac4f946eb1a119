//! Synthetic biased stance predictor.
//!
//! Each prediction runs a decision cascade with two bias stages before an
//! accuracy stage:
//!
//! 1. **leakage**: with probability `leakage_rate`, emit the stance the
//!    sentiment maps to (positive → support, negative → against,
//!    neutral → neutral);
//! 2. **entity bias**: if the target has an entry in `entity_bias`, with
//!    its `rate` emit its `label`;
//! 3. **accuracy**: with probability `base_accuracy` emit the gold stance,
//!    otherwise one of the two other labels uniformly.
//!
//! [`CascadeOrder::EntityFirst`] swaps stages 1 and 2.
//!
//! Randomness comes from one ChaCha8 stream seeded with `seed`. Every stage
//! that is reached consumes exactly one `u64`, converted to a uniform in
//! [0, 1) as `(x >> 11) * 2^-53`; stage 2 is only reached (and only draws)
//! when the target has a bias entry. The wrong-label pick in stage 3 draws
//! one more uniform `u` and takes the first non-gold label (in label order)
//! when `u < 0.5`, the second otherwise. This fixes the stream consumption
//! so results reproduce bit for bit across implementations.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Example;
use crate::labels::StanceLabel;
use crate::predictor::PredictionRecord;

pub const SIMULATOR_BACKEND: &str = "simulator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeOrder {
    #[default]
    LeakageFirst,
    EntityFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntityBias {
    pub label: StanceLabel,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulatorConfig {
    pub leakage_rate: f64,
    pub entity_bias: BTreeMap<String, EntityBias>,
    pub base_accuracy: f64,
    pub seed: u64,
    pub order: CascadeOrder,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            leakage_rate: 0.5,
            entity_bias: BTreeMap::new(),
            base_accuracy: 0.9,
            seed: 0,
            order: CascadeOrder::LeakageFirst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("simulator {field} must be in [0, 1], got {value}")]
pub struct SimulatorConfigError {
    pub field: String,
    pub value: f64,
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<(), SimulatorConfigError> {
        let check = |field: String, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimulatorConfigError { field, value })
            }
        };
        check("leakage_rate".into(), self.leakage_rate)?;
        check("base_accuracy".into(), self.base_accuracy)?;
        for (entity, bias) in &self.entity_bias {
            check(format!("entity_bias.{entity}.rate"), bias.rate)?;
        }
        Ok(())
    }
}

/// The seeded random stream shared by a batch.
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

fn wrong_label(gold: StanceLabel, u: f64) -> StanceLabel {
    let others: Vec<StanceLabel> = StanceLabel::ALL.into_iter().filter(|l| *l != gold).collect();
    if u < 0.5 {
        others[0]
    } else {
        others[1]
    }
}

fn leakage_stage(example: &Example, config: &SimulatorConfig, rng: &mut SimRng) -> Option<StanceLabel> {
    (rng.uniform() < config.leakage_rate).then(|| example.sentiment.mapped_stance())
}

fn entity_stage(example: &Example, config: &SimulatorConfig, rng: &mut SimRng) -> Option<StanceLabel> {
    let bias = config.entity_bias.get(&example.target_id)?;
    (rng.uniform() < bias.rate).then_some(bias.label)
}

/// Draws the simulated label for one example.
pub fn simulate_label(example: &Example, config: &SimulatorConfig, rng: &mut SimRng) -> StanceLabel {
    let biased = match config.order {
        CascadeOrder::LeakageFirst => {
            leakage_stage(example, config, rng).or_else(|| entity_stage(example, config, rng))
        }
        CascadeOrder::EntityFirst => {
            entity_stage(example, config, rng).or_else(|| leakage_stage(example, config, rng))
        }
    };
    if let Some(label) = biased {
        return label;
    }
    if rng.uniform() < config.base_accuracy {
        example.stance
    } else {
        wrong_label(example.stance, rng.uniform())
    }
}

/// Identifies the simulated input for provenance: digest of target and text.
fn input_hash(example: &Example) -> String {
    let mut h = Sha256::new();
    h.update(example.target_id.as_bytes());
    h.update([0u8]);
    h.update(example.text.as_bytes());
    hex::encode(h.finalize())
}

pub fn simulate_prediction(example: &Example, config: &SimulatorConfig, rng: &mut SimRng) -> PredictionRecord {
    let label = simulate_label(example, config, rng);
    PredictionRecord::hard(&example.id, label, SIMULATOR_BACKEND, input_hash(example))
}

/// Simulates a whole batch in order from a single stream seeded with
/// `config.seed`.
pub fn simulate_batch(examples: &[Example], config: &SimulatorConfig) -> Result<Vec<PredictionRecord>, SimulatorConfigError> {
    config.validate()?;
    let mut rng = SimRng::new(config.seed);
    Ok(examples.iter().map(|ex| simulate_prediction(ex, config, &mut rng)).collect())
}
