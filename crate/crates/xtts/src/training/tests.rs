use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use super::*;
use crate::audio::{wav_write, StftConfig, Waveform};
use crate::datasel::{CorpusManifest, UtteranceRecord};
use crate::model::{EncoderKind, ModelConfig, ParamStore};
use crate::textfront::{build_inventory, Mode, SymbolInventory};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn tts_loss_is_near_zero_on_perfect_prediction() {
    let mel = Tensor::from_vec(&[2, 3], vec![0.3, -0.1, 0.7, 1.2, -0.5, 0.0]);
    let gates = Tensor::from_vec(&[2], vec![0.0, 1.0]);
    let logits = Tensor::from_vec(&[2], vec![-20.0, 20.0]);
    let loss = tts_loss(&mel, &mel, &logits, &mel, &gates).unwrap().item();
    assert!(loss < 1e-6, "perfect prediction lost {loss}");
}

#[test]
fn doubling_the_residual_quadruples_the_loss() {
    let target = Tensor::zeros(&[1, 4]);
    let gates = Tensor::from_vec(&[1], vec![1.0]);
    let logits = Tensor::from_vec(&[1], vec![20.0]);
    let off = |d: f64| Tensor::from_vec(&[1, 4], vec![d; 4]);
    let small = tts_loss(&off(0.1), &off(0.1), &logits, &target, &gates)
        .unwrap()
        .item();
    let large = tts_loss(&off(0.2), &off(0.2), &logits, &target, &gates)
        .unwrap()
        .item();
    assert!(close(large / small, 4.0, 1e-6), "ratio {}", large / small);
}

#[test]
fn gate_targets_are_one_hot_at_the_end() {
    let g = gate_targets(4);
    assert_eq!(g.shape(), &[4]);
    assert_eq!(g.values(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn adam_first_step_moves_by_the_learning_rate() {
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let mut store = ParamStore::init(&cfg, 6, 1).unwrap();
    let name = "decoder.gate.b";
    let old = store.get(name).unwrap().values()[0];

    let mut grads = Gradients::new();
    grads.insert(name.to_string(), vec![0.5]);
    let mut state = OptimizerState::new();
    adam_step(&mut store, &grads, &mut state, 1e-3).unwrap();

    let new = store.get(name).unwrap().values()[0];
    assert!(close(old - new, 1e-3, 1e-6), "moved {}", old - new);
    assert_eq!(state.step(), 1);
}

#[test]
fn absent_and_zero_gradients_leave_parameters_unchanged() {
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let mut store = ParamStore::init(&cfg, 6, 1).unwrap();
    let before: Vec<(String, Vec<f64>)> = store
        .iter()
        .map(|(n, t)| (n.to_string(), t.values().to_vec()))
        .collect();

    let mut state = OptimizerState::new();
    adam_step(&mut store, &Gradients::new(), &mut state, 1e-2).unwrap();
    let mut zeros = Gradients::new();
    let gate_len = store.get("decoder.gate.w").unwrap().len();
    zeros.insert("decoder.gate.w".to_string(), vec![0.0; gate_len]);
    adam_step(&mut store, &zeros, &mut state, 1e-2).unwrap();

    for (name, values) in before {
        assert_eq!(store.get(&name).unwrap().values(), values.as_slice(), "{name}");
    }
}

#[test]
fn adam_is_deterministic() {
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let run = || {
        let mut store = ParamStore::init(&cfg, 6, 9).unwrap();
        let mut state = OptimizerState::new();
        for round in 1..=3 {
            let mut grads = Gradients::new();
            let len = store.get("decoder.proj.b").unwrap().len();
            grads.insert(
                "decoder.proj.b".to_string(),
                (0..len).map(|i| 0.1 * (round as f64) * (i + 1) as f64).collect(),
            );
            adam_step(&mut store, &grads, &mut state, 1e-3).unwrap();
        }
        store.get("decoder.proj.b").unwrap().values().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn clipping_rescales_large_gradients_to_unit_norm() {
    let mut grads = Gradients::new();
    grads.insert("a".to_string(), vec![1.2, 1.6]);
    clip_gradients(&mut grads);
    let g = &grads["a"];
    assert!(close(g[0], 0.6, 1e-12) && close(g[1], 0.8, 1e-12), "{g:?}");
}

#[test]
fn clipping_leaves_small_gradients_alone() {
    let mut grads = Gradients::new();
    grads.insert("a".to_string(), vec![0.3, 0.4]);
    clip_gradients(&mut grads);
    assert_eq!(grads["a"], vec![0.3, 0.4]);
}

#[test]
fn improving_validations_keep_the_rate() {
    let cfg = TrainConfig::default();
    let mut s = LrSchedule::new(&cfg);
    assert_eq!(s.lr(), 1e-3);
    for loss in [1.0, 0.9, 0.8, 0.7] {
        s.observe(loss, &cfg);
    }
    assert_eq!(s.lr(), 1e-3);
}

#[test]
fn schedule_halves_after_patience_and_respects_the_floor() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(&cfg, &[1.0, 1.0, 1.0, 1.0]), 5e-4);
    assert_eq!(lr_at(&cfg, &[1.0; 7]), 4e-4);
    assert_eq!(lr_at(&cfg, &[1.0; 40]), 4e-4);
}

#[test]
fn validation_split_is_a_stable_five_percent()
{
    let flags: Vec<bool> = (0..10_000)
        .map(|i| is_validation_id(&format!("utt-{i:04}")))
        .collect();
    let again: Vec<bool> = (0..10_000)
        .map(|i| is_validation_id(&format!("utt-{i:04}")))
        .collect();
    assert_eq!(flags, again);
    let count = flags.iter().filter(|&&f| f).count();
    assert!((350..=650).contains(&count), "validation ids: {count}");
}

fn rec(id: &str, audio: &str, text: &str, speaker: &str) -> UtteranceRecord {
    UtteranceRecord {
        id: id.into(),
        audio: audio.into(),
        text: text.into(),
        speaker: speaker.into(),
        lang_spans: None,
        metrics: None,
        kept: None,
        provenance: None,
        extra: serde_json::Map::new(),
    }
}

fn write_tone(path: &Path, samples: usize, freq: f64) {
    let data: Vec<f64> = (0..samples)
        .map(|i| 0.4 * (2.0 * PI * freq * i as f64 / 8000.0).sin())
        .collect();
    wav_write(path, &Waveform::new(data, 8000).unwrap()).unwrap();
}

fn toy_stft() -> StftConfig {
    StftConfig {
        sample_rate: 8000,
        fft_size: 256,
        hop: 64,
        win_length: 128,
        mel_bins: 4,
        fmin: 0.0,
        fmax: 3500.0,
        log_floor: 1e-5,
    }
}

fn toy_corpus(dir: &Path) -> CorpusManifest {
    let spec = [
        ("a1", "ab", "alice", 300.0, 576),
        ("a2", "ba", "alice", 450.0, 448),
        ("b1", "ab", "bob", 700.0, 576),
        ("b2", "bb", "bob", 900.0, 512),
    ];
    let mut records = Vec::new();
    for (id, text, speaker, freq, samples) in spec {
        let name = format!("{id}.wav");
        write_tone(&dir.join(&name), samples, freq);
        records.push(rec(id, &name, text, speaker));
    }
    CorpusManifest::new(records, dir.to_path_buf(), None).unwrap()
}

fn toy_inventory() -> SymbolInventory {
    build_inventory(&["ab", "ba", "bb"], Mode::Character, None).unwrap()
}

fn toy_train(steps: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        lr_initial: 5e-3,
        lr_floor: 1e-3,
        lr_halve_patience: 2,
        pretrain_steps: steps,
        finetune_max_steps: steps,
        early_stop_patience: 3,
        val_interval: 5,
        seed: 11,
        freeze_patterns: vec!["encoder.".into(), "embedding.symbols".into()],
    }
}

#[test]
fn pretrain_rejects_empty_manifest() {
    let manifest = CorpusManifest::new(vec![], std::path::PathBuf::from("."), None).unwrap();
    let err = pretrain(
        &manifest,
        &toy_inventory(),
        None,
        &ModelConfig::tiny(EncoderKind::Shared),
        &toy_train(2),
        &toy_stft(),
    )
    .unwrap_err();
    assert!(matches!(err, TrainError::EmptyManifest), "{err}");
}

#[test]
fn pretrain_widens_default_speaker_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let mut cfg = ModelConfig::tiny(EncoderKind::Shared);
    cfg.num_speakers = 1;
    let out = pretrain(&manifest, &toy_inventory(), None, &cfg, &toy_train(2), &toy_stft()).unwrap();
    assert_eq!(out.checkpoint.config.num_speakers, 2);
    assert_eq!(out.checkpoint.speakers["alice"], 0);
    assert_eq!(out.checkpoint.speakers["bob"], 1);
}

#[test]
fn pretrain_rejects_wrong_speaker_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let mut cfg = ModelConfig::tiny(EncoderKind::Shared);
    cfg.num_speakers = 3;
    let err = pretrain(&manifest, &toy_inventory(), None, &cfg, &toy_train(2), &toy_stft())
        .unwrap_err();
    assert!(
        matches!(err, TrainError::SpeakerCountMismatch { config: 3, manifest: 2 }),
        "{err}"
    );
}

#[test]
fn pretrain_rejects_mel_bin_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let mut stft = toy_stft();
    stft.mel_bins = 5;
    let err = pretrain(
        &manifest,
        &toy_inventory(),
        None,
        &ModelConfig::tiny(EncoderKind::Shared),
        &toy_train(2),
        &stft,
    )
    .unwrap_err();
    assert!(matches!(err, TrainError::ConfigMismatch { .. }), "{err}");
}

#[test]
fn pretrain_reduces_training_loss() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let out = pretrain(
        &manifest,
        &toy_inventory(),
        None,
        &ModelConfig::tiny(EncoderKind::Shared),
        &toy_train(40),
        &toy_stft(),
    )
    .unwrap();
    assert!(out.initial_loss > 0.0);
    assert!(
        out.final_loss < out.initial_loss,
        "loss went {} -> {}",
        out.initial_loss,
        out.final_loss
    );
    assert_eq!(out.validations.len(), 8);
    assert_eq!(out.checkpoint.step, 40);
}

#[test]
fn pretrain_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let run = || {
        pretrain(
            &manifest,
            &toy_inventory(),
            None,
            &ModelConfig::tiny(EncoderKind::Shared),
            &toy_train(6),
            &toy_stft(),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());

    let pa = dir.path().join("a.ckpt");
    let pb = dir.path().join("b.ckpt");
    save_checkpoint(&pa, &a.checkpoint).unwrap();
    save_checkpoint(&pb, &b.checkpoint).unwrap();
    assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    assert_eq!(a.final_loss, b.final_loss);
}

#[test]
fn finetune_keeps_frozen_parameters_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let inventory = toy_inventory();
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let ckpt = pretrain(&manifest, &inventory, None, &cfg, &toy_train(4), &toy_stft())
        .unwrap()
        .checkpoint;

    let target = CorpusManifest::new(
        vec![rec("a1", "a1.wav", "ab", "alice"), rec("a2", "a2.wav", "ba", "alice")],
        dir.path().to_path_buf(),
        None,
    )
    .unwrap();
    let out = finetune(&ckpt, &target, None, &toy_train(6), &toy_stft()).unwrap();

    let mut frozen = 0;
    let mut moved = 0;
    for (name, before) in ckpt.params.iter() {
        let after = out.checkpoint.params.get(name).unwrap();
        let same = before.values() == after.values();
        if name.starts_with("encoder.") || name.starts_with("embedding.symbols") {
            assert!(same, "{name} moved despite freezing");
            frozen += 1;
        } else if !same {
            moved += 1;
        }
    }
    assert!(frozen > 0, "no frozen parameters checked");
    assert!(moved > 0, "finetuning moved nothing");
}

#[test]
fn finetune_rejects_unmatched_freeze_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let ckpt = pretrain(
        &manifest,
        &toy_inventory(),
        None,
        &ModelConfig::tiny(EncoderKind::Shared),
        &toy_train(2),
        &toy_stft(),
    )
    .unwrap()
    .checkpoint;

    let mut cfg = toy_train(2);
    cfg.freeze_patterns = vec!["nonexistent.".into()];
    let err = finetune(&ckpt, &manifest, None, &cfg, &toy_stft()).unwrap_err();
    assert!(matches!(err, TrainError::FreezeMatchesNothing { .. }), "{err}");
}

#[test]
fn finetune_rejects_unknown_speaker() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let ckpt = pretrain(
        &manifest,
        &toy_inventory(),
        None,
        &ModelConfig::tiny(EncoderKind::Shared),
        &toy_train(2),
        &toy_stft(),
    )
    .unwrap()
    .checkpoint;

    let stranger = CorpusManifest::new(
        vec![rec("m1", "a1.wav", "ab", "mallory")],
        dir.path().to_path_buf(),
        None,
    )
    .unwrap();
    let err = finetune(&ckpt, &stranger, None, &toy_train(2), &toy_stft()).unwrap_err();
    assert!(matches!(err, TrainError::UnknownSpeaker { .. }));
    let msg = format!("{err}");
    assert!(msg.contains("mallory") && msg.contains("alice, bob"), "{msg}");
}

#[test]
fn finetune_early_stops_when_validation_stalls() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = toy_corpus(dir.path());
    let ckpt = pretrain(
        &manifest,
        &toy_inventory(),
        None,
        &ModelConfig::tiny(EncoderKind::Shared),
        &toy_train(2),
        &toy_stft(),
    )
    .unwrap()
    .checkpoint;

    let mut cfg = toy_train(50);
    cfg.val_interval = 1;
    cfg.early_stop_patience = 2;
    cfg.freeze_patterns = vec![String::new()];
    let out = finetune(&ckpt, &manifest, None, &cfg, &toy_stft()).unwrap();

    assert_eq!(out.validations.len(), 3, "{:?}", out.validations);
    assert!(out.validations.windows(2).all(|w| w[0].1 == w[1].1));
    assert_eq!(out.checkpoint.step, 1, "best snapshot is the first validation");
}

fn toy_checkpoint() -> Checkpoint {
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let inventory = toy_inventory();
    let mut params = ParamStore::init(&cfg, inventory.size(), 3).unwrap();

    let mut state = OptimizerState::new();
    let mut grads = Gradients::new();
    let len = params.get("decoder.proj.b").unwrap().len();
    grads.insert("decoder.proj.b".to_string(), vec![0.25; len]);
    adam_step(&mut params, &grads, &mut state, 1e-3).unwrap();

    let train = TrainConfig::default();
    let mut schedule = LrSchedule::new(&train);
    schedule.observe(2.5, &train);

    Checkpoint {
        config: cfg,
        inventory,
        speakers: BTreeMap::from([("alice".to_string(), 0), ("bob".to_string(), 1)]),
        params,
        optimizer: Some(state),
        step: 17,
        schedule,
    }
}

#[test]
fn checkpoint_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.ckpt");
    let second = dir.path().join("second.ckpt");

    let ckpt = toy_checkpoint();
    save_checkpoint(&first, &ckpt).unwrap();
    let loaded = load_checkpoint(&first).unwrap();
    save_checkpoint(&second, &loaded).unwrap();

    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    assert_eq!(loaded.config, ckpt.config);
    assert_eq!(loaded.inventory, ckpt.inventory);
    assert_eq!(loaded.speakers, ckpt.speakers);
    assert_eq!(loaded.step, 17);
    assert_eq!(loaded.schedule, ckpt.schedule);
    assert_eq!(loaded.optimizer, ckpt.optimizer);
}

#[test]
fn checkpoint_rejects_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ckpt");
    save_checkpoint(&path, &toy_checkpoint()).unwrap();

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();

    let err = load_checkpoint(&path).unwrap_err();
    assert!(format!("{err}").contains("magic"), "{err}");
}

#[test]
fn checkpoint_rejects_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ckpt");
    save_checkpoint(&path, &toy_checkpoint()).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();

    let err = load_checkpoint(&path).unwrap_err();
    assert!(format!("{err}").contains("truncated"), "{err}");
}

#[test]
fn checkpoint_rejects_future_version() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ckpt");
    save_checkpoint(&path, &toy_checkpoint()).unwrap();

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&path, bytes).unwrap();

    let err = load_checkpoint(&path).unwrap_err();
    assert!(format!("{err}").contains("version"), "{err}");
}

#[test]
fn ensure_config_flags_encoder_mismatch() {
    let ckpt = toy_checkpoint();
    assert!(ckpt.ensure_config(&ckpt.config).is_ok());

    let err = ckpt
        .ensure_config(&ModelConfig::tiny(EncoderKind::Spe))
        .unwrap_err();
    assert!(format!("{err}").to_lowercase().contains("encoder"), "{err}");
}
