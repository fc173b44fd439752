//! The two training stages: pretraining on the filtered found corpus and
//! target-speaker finetuning with the encoder frozen.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::{wav_read, wav_to_mel, StftConfig};
use crate::datasel::CorpusManifest;
use crate::model::{forward_teacher_forced, ModelConfig, ParamStore, Params};
use crate::numcore::{add, mul, Real, Tape, Tensor};
use crate::textfront::{
    derive_language_mask, tokenize, LanguageMask, Lexicon, SymbolInventory, SymbolSequence,
};

use super::{
    adam_step, clip_gradients, gate_targets, is_validation_id, tts_loss, Checkpoint, Gradients,
    LrSchedule, OptimizerState, TrainConfig, TrainError,
};

/// What a finished training stage hands back.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean batch loss of the first optimizer step.
    pub initial_loss: Real,
    /// Mean batch loss of the last optimizer step that ran.
    pub final_loss: Real,
    /// `(step, validation loss)` pairs in the order they were measured.
    pub validations: Vec<(u64, Real)>,
}

/// One utterance ready for the model: tokenized text, language mask,
/// speaker row and the log-mel target.
struct TrainItem {
    seq: SymbolSequence,
    mask: LanguageMask,
    speaker_row: usize,
    target: Tensor,
    id: String,
}

fn prepare_items(
    manifest: &CorpusManifest,
    inventory: &SymbolInventory,
    lexicon: Option<&Lexicon>,
    speakers: &BTreeMap<String, usize>,
    stft: &StftConfig,
) -> Result<Vec<TrainItem>, TrainError> {
    let mut items = Vec::new();
    for record in manifest.kept_records() {
        let row = speakers
            .get(&record.speaker)
            .copied()
            .ok_or_else(|| TrainError::UnknownSpeaker {
                speaker: record.speaker.clone(),
                known: speakers.keys().cloned().collect(),
            })?;
        let wav = wav_read(&manifest.resolve_audio(record), stft.sample_rate)?;
        let mel = wav_to_mel(&wav, stft)?;
        let target = Tensor::from_vec(&[mel.t_out(), mel.mel_bins()], mel.values().to_vec());
        let seq = tokenize(&record.text, inventory, lexicon)?;
        let spans = record.span_tuples();
        let mask = derive_language_mask(&record.text, &seq, spans.as_deref())?;
        items.push(TrainItem {
            seq,
            mask,
            speaker_row: row,
            target,
            id: record.id.clone(),
        });
    }
    if items.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    Ok(items)
}

/// Split item indices into a training and a validation set by id hash.
/// A degenerate split falls back to using every item on both sides.
fn split_items(items: &[TrainItem]) -> (Vec<usize>, Vec<usize>) {
    let (val, train): (Vec<usize>, Vec<usize>) =
        (0..items.len()).partition(|&i| is_validation_id(&items[i].id));
    if train.is_empty() || val.is_empty() {
        let all: Vec<usize> = (0..items.len()).collect();
        return (all.clone(), all);
    }
    (train, val)
}

fn item_loss(item: &TrainItem, params: &Params, cfg: &ModelConfig) -> Result<Tensor, TrainError> {
    let tf = forward_teacher_forced(
        &item.seq,
        Some(&item.mask),
        item.speaker_row,
        &item.target,
        params,
        cfg,
    )?;
    let steps = tf.gate_logits.shape()[0];
    let gates = gate_targets(steps);
    Ok(tts_loss(
        &tf.mel_before,
        &tf.mel_after,
        &tf.gate_logits,
        &tf.target_padded,
        &gates,
    )?)
}

fn mean_loss_over(
    indices: &[usize],
    items: &[TrainItem],
    params: &Params,
    cfg: &ModelConfig,
) -> Result<Tensor, TrainError> {
    let mut total: Option<Tensor> = None;
    for &i in indices {
        let loss = item_loss(&items[i], params, cfg)?;
        total = Some(match total {
            None => loss,
            Some(t) => add(&t, &loss)?,
        });
    }
    let total = total.expect("loss is averaged over at least one item");
    Ok(mul(&total, &Tensor::scalar(1.0 / indices.len() as Real))?)
}

/// Validation loss with untracked parameters.
fn evaluate(
    indices: &[usize],
    items: &[TrainItem],
    store: &ParamStore,
    cfg: &ModelConfig,
) -> Result<Real, TrainError> {
    let params = store.tensors();
    Ok(mean_loss_over(indices, items, &params, cfg)?.item())
}

struct StageResult {
    store: ParamStore,
    optimizer: OptimizerState,
    step: u64,
    schedule: LrSchedule,
    initial_loss: Real,
    final_loss: Real,
    validations: Vec<(u64, Real)>,
}

/// The optimization loop shared by both stages. With `early_stop` set the
/// stage keeps a snapshot of the best-validation state and returns it when
/// the patience runs out or the step budget ends.
fn run_stage(
    mut store: ParamStore,
    cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    items: &[TrainItem],
    train_idx: &[usize],
    val_idx: &[usize],
    frozen: &[String],
    max_steps: usize,
    early_stop: Option<usize>,
) -> Result<StageResult, TrainError> {
    let frozen_refs: Vec<&str> = frozen.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order = train_idx.to_vec();
    let mut cursor = order.len();

    let mut optimizer = OptimizerState::new();
    let mut schedule = LrSchedule::new(train_cfg);
    let mut validations = Vec::new();
    let mut initial_loss = 0.0;
    let mut final_loss = 0.0;

    let mut best_val: Option<Real> = None;
    let mut bad_streak = 0usize;
    let mut snapshot: Option<(ParamStore, OptimizerState, u64, LrSchedule)> = None;

    while (optimizer.step() as usize) < max_steps {
        let mut batch = Vec::with_capacity(train_cfg.batch_size);
        while batch.len() < train_cfg.batch_size {
            if cursor >= order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }

        let tape = Tape::new();
        let params = store.tracked(&tape, &frozen_refs);
        let mean = mean_loss_over(&batch, items, &params, cfg)?;
        let loss_value = mean.item();
        if !loss_value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step: optimizer.step() + 1,
            });
        }

        let mut grads = Gradients::new();
        if mean.is_tracked() {
            tape.backward(&mean)?;
            for name in params.names() {
                if let Some(g) = tape.grad(params.get(name)?) {
                    grads.insert(name.to_string(), g.values().to_vec());
                }
            }
        }
        clip_gradients(&mut grads);
        adam_step(&mut store, &grads, &mut optimizer, schedule.lr())?;

        let step = optimizer.step();
        if step == 1 {
            initial_loss = loss_value;
        }
        final_loss = loss_value;

        if step % train_cfg.val_interval as u64 == 0 {
            let val_loss = evaluate(val_idx, items, &store, cfg)?;
            validations.push((step, val_loss));
            schedule.observe(val_loss, train_cfg);

            if early_stop.is_some() {
                let improved = best_val.is_none_or(|b| val_loss < b);
                if improved {
                    best_val = Some(val_loss);
                    bad_streak = 0;
                    snapshot = Some((store.clone(), optimizer.clone(), step, schedule.clone()));
                } else {
                    bad_streak += 1;
                    if bad_streak >= early_stop.expect("checked above") {
                        break;
                    }
                }
            }
        }
    }

    let (store, optimizer, step, schedule) = match snapshot {
        Some(s) => s,
        None => {
            let step = optimizer.step();
            (store, optimizer, step, schedule)
        }
    };
    Ok(StageResult {
        store,
        optimizer,
        step,
        schedule,
        initial_loss,
        final_loss,
        validations,
    })
}

/// Pretrain a fresh model on the kept records of `manifest`.
///
/// The speaker table maps the manifest's sorted speaker names to rows
/// `0..n`. A config that still has the default single speaker is widened
/// to the manifest's count; any other disagreement is an error.
pub fn pretrain(
    manifest: &CorpusManifest,
    inventory: &SymbolInventory,
    lexicon: Option<&Lexicon>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    stft: &StftConfig,
) -> Result<TrainOutcome, TrainError> {
    train_cfg.validate()?;
    stft.validate()?;

    let names: Vec<String> = {
        let set: BTreeSet<&str> = manifest.kept_records().map(|r| r.speaker.as_str()).collect();
        set.into_iter().map(String::from).collect()
    };
    if names.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    let mut cfg = model_cfg.clone();
    if cfg.num_speakers == 1 {
        cfg.num_speakers = names.len();
    } else if cfg.num_speakers != names.len() {
        return Err(TrainError::SpeakerCountMismatch {
            config: cfg.num_speakers,
            manifest: names.len(),
        });
    }
    cfg.validate()?;
    if stft.mel_bins != cfg.mel_bins {
        return Err(TrainError::ConfigMismatch {
            msg: format!(
                "analysis produces {} mel bins but the model expects {}",
                stft.mel_bins, cfg.mel_bins
            ),
        });
    }

    let speakers: BTreeMap<String, usize> = names
        .into_iter()
        .enumerate()
        .map(|(row, name)| (name, row))
        .collect();
    let items = prepare_items(manifest, inventory, lexicon, &speakers, stft)?;
    let (train_idx, val_idx) = split_items(&items);

    let store = ParamStore::init(&cfg, inventory.size(), train_cfg.seed)?;
    let result = run_stage(
        store,
        &cfg,
        train_cfg,
        &items,
        &train_idx,
        &val_idx,
        &[],
        train_cfg.pretrain_steps,
        None,
    )?;

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: cfg,
            inventory: inventory.clone(),
            speakers,
            params: result.store,
            optimizer: Some(result.optimizer),
            step: result.step,
            schedule: result.schedule,
        },
        initial_loss: result.initial_loss,
        final_loss: result.final_loss,
        validations: result.validations,
    })
}

/// Adapt a pretrained checkpoint to the speakers of `manifest`, leaving
/// every parameter matched by `freeze_patterns` untouched.
///
/// The optimizer and learning-rate schedule restart from scratch; the
/// frozen parameters carry over bit for bit. With validation data the
/// stage early-stops and returns the best-validation snapshot.
pub fn finetune(
    ckpt: &Checkpoint,
    manifest: &CorpusManifest,
    lexicon: Option<&Lexicon>,
    train_cfg: &TrainConfig,
    stft: &StftConfig,
) -> Result<TrainOutcome, TrainError> {
    train_cfg.validate()?;
    stft.validate()?;
    if stft.mel_bins != ckpt.config.mel_bins {
        return Err(TrainError::ConfigMismatch {
            msg: format!(
                "analysis produces {} mel bins but the checkpoint expects {}",
                stft.mel_bins, ckpt.config.mel_bins
            ),
        });
    }

    let matched = ckpt.params.iter().any(|(name, _)| {
        train_cfg
            .freeze_patterns
            .iter()
            .any(|p| name.starts_with(p.as_str()))
    });
    if !matched {
        return Err(TrainError::FreezeMatchesNothing {
            patterns: train_cfg.freeze_patterns.clone(),
        });
    }

    let items = prepare_items(manifest, &ckpt.inventory, lexicon, &ckpt.speakers, stft)?;
    let (train_idx, val_idx) = split_items(&items);

    let result = run_stage(
        ckpt.params.clone(),
        &ckpt.config,
        train_cfg,
        &items,
        &train_idx,
        &val_idx,
        &train_cfg.freeze_patterns,
        train_cfg.finetune_max_steps,
        Some(train_cfg.early_stop_patience),
    )?;

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: ckpt.config.clone(),
            inventory: ckpt.inventory.clone(),
            speakers: ckpt.speakers.clone(),
            params: result.store,
            optimizer: Some(result.optimizer),
            step: result.step,
            schedule: result.schedule,
        },
        initial_loss: result.initial_loss,
        final_loss: result.final_loss,
        validations: result.validations,
    })
}
