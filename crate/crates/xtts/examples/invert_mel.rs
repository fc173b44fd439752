//! Invert a mel spectrogram back to audio with Griffin-Lim and watch the
//! reconstruction error fall as iterations increase.
//!
//! Run with `cargo run --example invert_mel`. The reconstructed wav lands in
//! a temp directory whose path is printed at the end.

use std::f64::consts::TAU;
use std::fs;

use xtts::audio::{
    griffin_lim, spectral_convergence, stft_magnitude, wav_to_mel, wav_write, StftConfig, Waveform,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stft = StftConfig {
        sample_rate: 8000,
        fft_size: 256,
        hop: 64,
        win_length: 128,
        mel_bins: 32,
        fmin: 0.0,
        fmax: 3500.0,
        log_floor: 1e-5,
    };

    // A two-note 8 kHz phrase, half a second per note.
    let samples: Vec<f64> = (0..8000)
        .map(|i| {
            let t = i as f64 / 8000.0;
            let freq = if i < 4000 { 440.0 } else { 660.0 };
            0.5 * (TAU * freq * t).sin()
        })
        .collect();
    let original = Waveform::new(samples, 8000)?;
    let reference = stft_magnitude(&original, &stft)?;
    let mel = wav_to_mel(&original, &stft)?;
    println!(
        "mel: {} frames x {} bins from a {:.2} s clip",
        mel.t_out(),
        mel.mel_bins(),
        original.duration_seconds()
    );

    // Phase is gone; Griffin-Lim re-estimates it by alternating projections.
    // Spectral convergence compares the reconstruction's magnitudes to the
    // originals (0 would be a perfect match).
    println!("iterations   spectral convergence");
    let mut rebuilt = None;
    for iterations in [1, 5, 15, 60] {
        let wave = griffin_lim(&mel, iterations)?;
        let sc = spectral_convergence(&wave, &reference, &stft)?;
        println!("{iterations:>10} {sc:>22.4}");
        rebuilt = Some(wave);
    }

    let out_dir = std::env::temp_dir().join("xtts-examples");
    fs::create_dir_all(&out_dir)?;
    let path = out_dir.join("invert_mel.wav");
    wav_write(&path, &rebuilt.unwrap())?;
    println!("wrote {}", path.display());
    Ok(())
}
