//! Inspect a waveform the way the data selector does: mel spectrogram plus
//! the three quality metrics that drive filtering.
//!
//! Run with `cargo run --example analyze_audio`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xtts::audio::{measure_quality, wav_to_mel, StftConfig, Waveform};
use xtts::textfront::{build_inventory, tokenize, Mode};

/// A second of 8 kHz "speech": a tone whose amplitude swells and fades a few
/// times, so frames have both loud and quiet stretches.
fn utterance(noise: f64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<f64> = (0..8000)
        .map(|i| {
            let t = i as f64 / 8000.0;
            let env = 0.3 * (1.0 + 0.8 * (TAU * 2.5 * t).sin());
            env * (TAU * 440.0 * t).sin() + rng.gen_range(-noise..=noise)
        })
        .collect();
    Waveform::new(samples, 8000).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stft = StftConfig {
        sample_rate: 8000,
        fft_size: 256,
        hop: 64,
        win_length: 128,
        mel_bins: 16,
        fmin: 0.0,
        fmax: 3500.0,
        log_floor: 1e-5,
    };
    let inventory = build_inventory(&["the quick brown fox"], Mode::Character, None)?;
    let seq = tokenize("the quick brown fox", &inventory, None)?;

    println!("clip      snr_db   rate/s   articulation");
    for (label, noise) in [("clean", 1e-4), ("noisy", 0.15)] {
        let wave = utterance(noise);
        let m = measure_quality(&wave, &seq, &stft)?;
        println!(
            "{label:<8} {:>7.1} {:>8.1} {:>14.2}",
            m.snr_db, m.speaking_rate, m.articulation
        );
    }

    // A coarse look at the clean clip's mel spectrogram: one column per
    // band, quietest cells blank, loudest solid.
    let mel = wav_to_mel(&utterance(1e-4), &stft)?;
    let (lo, hi) = mel
        .values()
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!(
        "\nmel spectrogram, {} frames x {} bins, log energy {:.1} to {:.1}:",
        mel.t_out(),
        mel.mel_bins(),
        lo,
        hi
    );
    let shades = [' ', '.', ':', '+', '#'];
    for t in (0..mel.t_out()).step_by(4) {
        let line: String = mel
            .frame(t)
            .iter()
            .map(|&v| {
                let level = ((v - lo) / (hi - lo) * (shades.len() - 1) as f64).round();
                shades[level as usize]
            })
            .collect();
        println!("  t={t:>3} |{line}|");
    }
    Ok(())
}
