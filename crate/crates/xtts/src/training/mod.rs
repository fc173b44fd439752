//! Loss, optimizer, learning-rate schedule, the two-stage pretrain and
//! finetune protocol with encoder freezing, early stopping, and the
//! checkpoint format.

mod checkpoint;
mod optim;
mod run;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;
use crate::datasel::DataError;
use crate::model::ModelError;
use crate::numcore::{add, bce_with_logits, mse, NumError, Tensor};
use crate::textfront::TextError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use optim::{adam_step, clip_gradients, lr_at, Gradients, LrSchedule, OptimizerState};
pub use run::{finetune, pretrain, TrainOutcome};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("manifest has no kept records")]
    EmptyManifest,
    #[error("config requests {config} speakers but the manifest has {manifest}")]
    SpeakerCountMismatch { config: usize, manifest: usize },
    #[error("unknown speaker {speaker:?}; known speakers: {}", known.join(", "))]
    UnknownSpeaker {
        speaker: String,
        known: Vec<String>,
    },
    #[error("freeze patterns {patterns:?} match no parameter")]
    FreezeMatchesNothing { patterns: Vec<String> },
    #[error("invalid training config: {msg}")]
    BadTrainConfig { msg: String },
    #[error("gradient for {name:?} does not match the parameter shape")]
    GradShape { name: String },
    #[error("training diverged: non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("configs disagree: {msg}")]
    ConfigMismatch { msg: String },
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a valid checkpoint: {msg}", path.display())]
    BadCheckpoint {
        path: std::path::PathBuf,
        msg: String,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Knobs of both training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Halving never goes below this.
    pub lr_floor: f64,
    /// Consecutive non-improving validations before the rate halves.
    pub lr_halve_patience: usize,
    pub pretrain_steps: usize,
    pub finetune_max_steps: usize,
    /// Non-improving validations before finetuning stops early.
    pub early_stop_patience: usize,
    /// Optimizer steps between validations.
    pub val_interval: usize,
    pub seed: u64,
    /// Parameter-name prefixes finetuning leaves untouched.
    pub freeze_patterns: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr_initial: 1e-3,
            lr_floor: 4e-4,
            lr_halve_patience: 3,
            pretrain_steps: 100_000,
            finetune_max_steps: 200_000,
            early_stop_patience: 5,
            val_interval: 1000,
            seed: 42,
            freeze_patterns: vec!["encoder.".into(), "embedding.symbols".into()],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let counts = [
            ("batch_size", self.batch_size),
            ("lr_halve_patience", self.lr_halve_patience),
            ("pretrain_steps", self.pretrain_steps),
            ("finetune_max_steps", self.finetune_max_steps),
            ("early_stop_patience", self.early_stop_patience),
            ("val_interval", self.val_interval),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(TrainError::BadTrainConfig {
                    msg: format!("{name} must be positive"),
                });
            }
        }
        if !(self.lr_initial > 0.0) {
            return Err(TrainError::BadTrainConfig {
                msg: "lr_initial must be positive".into(),
            });
        }
        if self.lr_floor > self.lr_initial {
            return Err(TrainError::BadTrainConfig {
                msg: "lr_floor must not exceed lr_initial".into(),
            });
        }
        Ok(())
    }
}

/// The composite synthesis loss: mel error before and after the postnet
/// plus binary cross-entropy on the stop gate.
pub fn tts_loss(
    mel_before: &Tensor,
    mel_after: &Tensor,
    gate_logits: &Tensor,
    target_mel: &Tensor,
    target_gates: &Tensor,
) -> Result<Tensor, NumError> {
    let before = mse(mel_before, target_mel)?;
    let after = mse(mel_after, target_mel)?;
    let gates = bce_with_logits(gate_logits, target_gates)?;
    add(&add(&before, &after)?, &gates)
}

/// Gate targets for a decoder run of `steps` steps: zero everywhere, one at
/// the final step.
pub fn gate_targets(steps: usize) -> Tensor {
    let mut values = vec![0.0; steps];
    values[steps - 1] = 1.0;
    Tensor::from_vec(&[steps], values)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic 5% validation split by utterance-id hash.
pub fn is_validation_id(id: &str) -> bool {
    fnv1a(id) % 20 == 0
}
