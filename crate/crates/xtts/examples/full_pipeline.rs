//! Every stage of the toolkit in one run: filter found speech, pretrain on
//! the mixture, finetune on the target voice, synthesize, and diagnose.
//!
//! Run with `cargo run --example full_pipeline`. Artifacts land in a temp
//! directory whose path is printed as the run goes.

use std::f64::consts::TAU;

use xtts::audio::{griffin_lim, wav_write, MelSpectrogram, StftConfig, Waveform};
use xtts::datasel::{
    filter_corpus, merge_manifests, score_corpus, CorpusManifest, UtteranceRecord,
};
use xtts::evaldiag::{teacher_forced_eval, write_report};
use xtts::model::{synthesize, EncoderKind, ModelConfig};
use xtts::textfront::{build_inventory, derive_language_mask, tokenize, Mode};
use xtts::training::{finetune, pretrain, save_checkpoint, TrainConfig};

fn record(id: &str, audio: &str, text: &str, speaker: &str) -> UtteranceRecord {
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

fn tone(path: &std::path::Path, samples: usize, freq: f64) -> Result<(), Box<dyn std::error::Error>> {
    let data: Vec<f64> = (0..samples)
        .map(|i| {
            let t = i as f64 / 8000.0;
            let env = 0.3 * (1.0 + 0.8 * (TAU * 3.0 * t).sin());
            env * (TAU * freq * t).sin()
        })
        .collect();
    wav_write(path, &Waveform::new(data, 8000)?)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    println!("working in {}", root.display());
    let stft = StftConfig {
        sample_rate: 8000,
        fft_size: 256,
        hop: 64,
        win_length: 128,
        mel_bins: 4,
        fmin: 0.0,
        fmax: 3500.0,
        log_floor: 1e-5,
    };

    // Found data: three speakers, two clips each, uncontrolled quality.
    let found_spec = [
        ("f1", "ab", "spk_a", 300.0, 1344),
        ("f2", "ba", "spk_a", 350.0, 1472),
        ("f3", "bb", "spk_b", 500.0, 1344),
        ("f4", "ab", "spk_b", 550.0, 1600),
        ("f5", "ba", "spk_c", 700.0, 1344),
        ("f6", "aba", "spk_c", 750.0, 1472),
    ];
    let mut records = Vec::new();
    for (id, text, speaker, freq, samples) in found_spec {
        let file = format!("{id}.wav");
        tone(&root.join(&file), samples, freq)?;
        records.push(record(id, &file, text, speaker));
    }
    let found = CorpusManifest::new(records, root.to_path_buf(), None)?;

    // Target data: the voice to clone, studio quality, mono-lingual.
    let mut records = Vec::new();
    for (id, text, freq) in [("t1", "ab", 900.0), ("t2", "ba", 950.0)] {
        let file = format!("{id}.wav");
        tone(&root.join(&file), 1344, freq)?;
        records.push(record(id, &file, text, "target"));
    }
    let target = CorpusManifest::new(records, root.to_path_buf(), None)?;

    // 1. Score and filter the found data, then pool it with the target.
    let inventory = build_inventory(&["ab", "ba", "bb", "aba"], Mode::Character, None)?;
    let scored = score_corpus(&found, &inventory, None, &stft);
    for warning in &scored.warnings {
        eprintln!("warning: {warning}");
    }
    let filtered = filter_corpus(&scored.manifest, 0.34)?;
    let kept = filtered.kept_records().count();
    println!("filter:    kept {kept} of {} found clips", filtered.len());
    let merged = merge_manifests(&filtered, &target)?;

    // 2. Pretrain on the mixture, all four voices at once.
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let train = TrainConfig {
        batch_size: 2,
        lr_initial: 5e-3,
        lr_floor: 1e-3,
        pretrain_steps: 150,
        val_interval: 50,
        seed: 42,
        ..TrainConfig::default()
    };
    let mut wide = cfg.clone();
    wide.num_speakers = 1; // widened to the manifest's speaker count
    let pre = pretrain(&merged, &inventory, None, &wide, &train, &stft)?;
    println!(
        "pretrain:  loss {:.2} -> {:.2}, {} speakers",
        pre.initial_loss,
        pre.final_loss,
        pre.checkpoint.speakers.len()
    );

    // 3. Finetune on the target speaker with the encoder frozen.
    let fine_cfg = TrainConfig {
        batch_size: 2,
        lr_initial: 2e-3,
        lr_floor: 5e-4,
        finetune_max_steps: 100,
        val_interval: 50,
        seed: 43,
        ..TrainConfig::default()
    };
    let fine = finetune(&pre.checkpoint, &target, None, &fine_cfg, &stft)?;
    println!(
        "finetune:  loss {:.2} -> {:.2} on the target voice",
        fine.initial_loss, fine.final_loss
    );
    let ckpt = fine.checkpoint;
    save_checkpoint(&root.join("cloned.ckpt"), &ckpt)?;

    // 4. Synthesize new text in the target voice and invert it to audio.
    let seq = tokenize("ba", &ckpt.inventory, None)?;
    let mask = derive_language_mask("ba", &seq, None)?;
    let speaker = ckpt.speaker_row("target")?;
    let synth = synthesize(&seq, Some(&mask), speaker, &ckpt.params.tensors(), &ckpt.config)?;
    let mel = MelSpectrogram::from_values(
        synth.mel.values().to_vec(),
        synth.mel.shape()[0],
        stft.clone(),
    )?;
    let wave = griffin_lim(&mel, 30)?;
    wav_write(&root.join("cloned.wav"), &wave)?;
    println!(
        "synth:     {} frames, {:.2} s of audio -> cloned.wav",
        mel.t_out(),
        wave.duration_seconds()
    );

    // 5. Teacher-forced evaluation with alignment diagnostics.
    let report = teacher_forced_eval(&ckpt, &target, None, &stft)?;
    write_report(&root.join("report.jsonl"), &report)?;
    let summary = report.summary();
    println!(
        "diagnose:  {} records, mean loss {:.2}, mean focus {:.2} -> report.jsonl",
        summary.records, summary.mean_loss, summary.mean_focus_rate
    );
    Ok(())
}
