//! The two-stage recipe behind voice cloning: pretrain on a multi-speaker
//! mixture, then finetune on the target speaker with the encoder frozen.
//!
//! Run with `cargo run --example pretrain_finetune`.

use std::f64::consts::TAU;

use xtts::audio::{wav_write, StftConfig, Waveform};
use xtts::datasel::{CorpusManifest, Provenance, UtteranceRecord};
use xtts::model::{EncoderKind, ModelConfig};
use xtts::textfront::{build_inventory, Mode};
use xtts::training::{finetune, load_checkpoint, pretrain, save_checkpoint, TrainConfig};

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

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
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

    // Two voices, distinguished by pitch; bob is the cloning target.
    let spec = [
        ("a1", "ab", "alice", 420.0, 576),
        ("a2", "ba", "alice", 460.0, 448),
        ("a3", "bb", "alice", 500.0, 704),
        ("b1", "ab", "bob", 640.0, 576),
        ("b2", "ba", "bob", 680.0, 512),
        ("b3", "aa", "bob", 720.0, 640),
    ];
    let mut records = Vec::new();
    for (id, text, speaker, freq, n) in spec {
        let file = format!("{id}.wav");
        let samples: Vec<f64> = (0..n)
            .map(|i| 0.4 * (TAU * freq * i as f64 / 8000.0).sin())
            .collect();
        wav_write(&dir.path().join(&file), &Waveform::new(samples, 8000)?)?;
        records.push(record(id, &file, text, speaker));
    }
    let mixture =
        CorpusManifest::new(records.clone(), dir.path().to_path_buf(), Some(Provenance::Found))?;
    let target = CorpusManifest::new(
        records.into_iter().filter(|r| r.speaker == "bob").collect(),
        dir.path().to_path_buf(),
        Some(Provenance::Target),
    )?;
    let inventory = build_inventory(&["ab", "ba", "bb", "aa"], Mode::Character, None)?;

    // Stage one: both speakers, everything trainable.
    let cfg = ModelConfig::tiny(EncoderKind::Shared);
    let train = TrainConfig {
        batch_size: 2,
        lr_initial: 5e-3,
        lr_floor: 1e-3,
        pretrain_steps: 200,
        val_interval: 50,
        seed: 42,
        ..TrainConfig::default()
    };
    let pre = pretrain(&mixture, &inventory, None, &cfg, &train, &stft)?;
    println!(
        "pretrain:  loss {:.2} -> {:.2} over {} steps, speakers {:?}",
        pre.initial_loss,
        pre.final_loss,
        pre.checkpoint.step,
        pre.checkpoint.speakers.keys().collect::<Vec<_>>()
    );
    let ckpt_path = dir.path().join("pretrained.ckpt");
    save_checkpoint(&ckpt_path, &pre.checkpoint)?;

    // Stage two: target speaker only. The default freeze list pins the
    // encoder and symbol embeddings; early stopping watches validation loss.
    let reloaded = load_checkpoint(&ckpt_path)?;
    let fine_cfg = TrainConfig {
        batch_size: 2,
        lr_initial: 2e-3,
        lr_floor: 5e-4,
        finetune_max_steps: 200,
        val_interval: 50,
        seed: 43,
        ..TrainConfig::default()
    };
    let fine = finetune(&reloaded, &target, None, &fine_cfg, &stft)?;
    println!(
        "finetune:  loss {:.2} -> {:.2}, stopped at step {}",
        fine.initial_loss, fine.final_loss, fine.checkpoint.step
    );

    let mut frozen = 0;
    let mut moved = 0;
    for (name, after) in fine.checkpoint.params.iter() {
        let before = reloaded.params.get(name)?;
        if after.values() == before.values() {
            frozen += 1;
        } else {
            moved += 1;
            if name.starts_with("decoder.gate") {
                println!("moved:     {name}");
            }
        }
    }
    println!("blocks:    {moved} updated, {frozen} untouched (encoder and symbol table)");
    Ok(())
}
