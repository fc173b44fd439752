//! The smallest possible end-to-end training run: memorize one utterance,
//! then check the model can say it back unprompted.
//!
//! Run with `cargo run --example overfit_single_utterance`.

use std::f64::consts::TAU;

use xtts::audio::{wav_to_mel, wav_write, StftConfig, Waveform};
use xtts::datasel::{CorpusManifest, Provenance, UtteranceRecord};
use xtts::evaldiag::diagnose_alignment;
use xtts::model::{synthesize, EncoderKind, ModelConfig};
use xtts::textfront::{build_inventory, derive_language_mask, tokenize, Mode};
use xtts::training::{pretrain, TrainConfig};

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

    // One 72 ms tone stands in for a recorded utterance of the text "ab".
    let samples: Vec<f64> = (0..576)
        .map(|i| 0.4 * (TAU * 420.0 * i as f64 / 8000.0).sin())
        .collect();
    let wave = Waveform::new(samples, 8000)?;
    wav_write(&dir.path().join("solo.wav"), &wave)?;
    let manifest = CorpusManifest::new(
        vec![UtteranceRecord {
            id: "solo".into(),
            audio: "solo.wav".into(),
            text: "ab".into(),
            speaker: "alice".into(),
            lang_spans: None,
            metrics: None,
            kept: None,
            provenance: None,
            extra: serde_json::Map::new(),
        }],
        dir.path().to_path_buf(),
        Some(Provenance::Target),
    )?;
    let inventory = build_inventory(&["ab"], Mode::Character, None)?;

    let mut cfg = ModelConfig::tiny(EncoderKind::Shared);
    cfg.num_speakers = 1;
    let train = TrainConfig {
        batch_size: 1,
        lr_initial: 5e-3,
        lr_floor: 1e-3,
        pretrain_steps: 1500,
        val_interval: 250,
        seed: 42,
        ..TrainConfig::default()
    };
    let outcome = pretrain(&manifest, &inventory, None, &cfg, &train, &stft)?;
    println!("step      validation loss");
    println!("{:>4} {:>20.4}", 0, outcome.initial_loss);
    for (step, loss) in &outcome.validations {
        println!("{step:>4} {loss:>20.4}");
    }

    // Free-running synthesis: the decoder hears only its own output.
    let ckpt = outcome.checkpoint;
    let seq = tokenize("ab", &ckpt.inventory, None)?;
    let mask = derive_language_mask("ab", &seq, None)?;
    let synth = synthesize(&seq, Some(&mask), 0, &ckpt.params.tensors(), &ckpt.config)?;

    let target = wav_to_mel(&wave, &stft)?;
    let frames = target.t_out().min(synth.mel.shape()[0]);
    let mut l1 = 0.0;
    for t in 0..frames {
        for (got, want) in synth.mel.values()[t * 4..t * 4 + 4]
            .iter()
            .zip(target.frame(t))
        {
            l1 += (got - want).abs();
        }
    }
    println!(
        "\nsynthesis: {} decoder steps, gate fired: {}",
        synth.steps,
        !synth.truncated
    );
    println!(
        "mean L1 against the training mel: {:.4} per cell over {frames} frames",
        l1 / (frames * 4) as f64
    );

    let diag = diagnose_alignment(&synth.alignment, !synth.truncated)?;
    println!(
        "alignment: focus {:.2}, coverage {:.2}, {} monotonicity violations",
        diag.focus_rate, diag.coverage, diag.monotonicity_violations
    );
    Ok(())
}
