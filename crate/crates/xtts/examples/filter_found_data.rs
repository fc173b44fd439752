//! Score a small "found speech" corpus and drop the worst clip per speaker,
//! the preprocessing step that precedes pretraining.
//!
//! Run with `cargo run --example filter_found_data`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xtts::audio::{wav_write, StftConfig, Waveform};
use xtts::datasel::{filter_corpus, score_corpus, top_speakers, CorpusManifest, UtteranceRecord};
use xtts::textfront::{build_inventory, Mode};

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
        mel_bins: 8,
        fmin: 0.0,
        fmax: 3500.0,
        log_floor: 1e-5,
    };

    // Three synthetic speakers, six clips each. One clip per speaker is
    // sabotaged: heavy noise for ivy, a rushed transcript for leo, a flat
    // monotone for mia.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut records = Vec::new();
    for (speaker, defect_k) in [("ivy", 4usize), ("leo", 1), ("mia", 3)] {
        for k in 0..6usize {
            let id = format!("{speaker}_{k}");
            let file = format!("{id}.wav");
            let freq = 380.0 + 20.0 * k as f64;
            let defect = k == defect_k;
            let samples: Vec<f64> = (0..4000)
                .map(|i| {
                    let t = i as f64 / 8000.0;
                    let env = if speaker == "mia" && defect {
                        0.3
                    } else {
                        0.3 * (1.0 + 0.8 * (TAU * 3.0 * t + k as f64).sin())
                    };
                    let noise = if speaker == "ivy" && defect {
                        rng.gen_range(-0.4..0.4)
                    } else {
                        0.0
                    };
                    env * (TAU * freq * t).sin() + noise
                })
                .collect();
            wav_write(&dir.path().join(&file), &Waveform::new(samples, 8000)?)?;
            let text = if speaker == "leo" && defect {
                "ab".repeat(20)
            } else {
                "abababab".into()
            };
            records.push(record(&id, &file, &text, speaker));
        }
    }
    let manifest = CorpusManifest::new(records, dir.path().to_path_buf(), None)?;
    let inventory = build_inventory(&["ab"], Mode::Character, None)?;

    let scored = score_corpus(&manifest, &inventory, None, &stft);
    for warning in &scored.warnings {
        eprintln!("warning: {warning}");
    }

    // Drop the lowest-quality 10% of every speaker (at least one clip here).
    let filtered = filter_corpus(&scored.manifest, 0.1)?;
    println!("id       snr_db   rate/s   artic   verdict");
    for r in &filtered.records {
        let m = r.metrics.as_ref().unwrap();
        println!(
            "{:<8} {:>6.1} {:>8.1} {:>7.2}   {}",
            r.id,
            m.snr_db,
            m.speaking_rate,
            m.articulation,
            if r.is_kept() { "kept" } else { "DROPPED" }
        );
    }

    // Speaker-level pruning works the same way on whole-group averages.
    let best_two = top_speakers(&filtered, 2)?;
    println!("\ntop 2 speakers: {:?}", best_two.speakers());
    Ok(())
}
