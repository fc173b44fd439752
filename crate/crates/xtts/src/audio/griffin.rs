//! Griffin-Lim phase reconstruction, with a mel-to-linear front end so
//! predicted mel spectrograms can be inverted without a neural vocoder.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::stft::{hann_window, mel_filterbank};
use super::{AudioError, MelSpectrogram, StftConfig, Waveform};

/// Complex STFT of raw samples, `[t_out][n_bins]`.
fn stft_complex(samples: &[f64], cfg: &StftConfig) -> Vec<Vec<Complex<f64>>> {
    let t_out = cfg
        .frame_count(samples.len())
        .expect("griffin-lim internal signal shorter than one window");
    let window = hann_window(cfg.win_length);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.n_bins();
    let mut frames = Vec::with_capacity(t_out);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for t in 0..t_out {
        let start = t * cfg.hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = if i < cfg.win_length {
                samples[start + i] * window[i]
            } else {
                0.0
            };
            *slot = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..n_bins].to_vec());
    }
    frames
}

/// Weighted overlap-add inverse STFT. Output length is exactly
/// `(t_out - 1) * hop + win_length`.
fn istft(spectra: &[Vec<Complex<f64>>], cfg: &StftConfig) -> Vec<f64> {
    let t_out = spectra.len();
    let out_len = (t_out - 1) * cfg.hop + cfg.win_length;
    let window = hann_window(cfg.win_length);
    let ifft = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
    let n_bins = cfg.n_bins();

    let mut out = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    for (t, half) in spectra.iter().enumerate() {
        // Rebuild the full Hermitian spectrum from the retained half.
        buf[..n_bins].copy_from_slice(half);
        for k in 1..cfg.fft_size - n_bins + 1 {
            buf[cfg.fft_size - k] = half[k].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..cfg.win_length {
            let s = buf[i].re / cfg.fft_size as f64;
            out[start + i] += s * window[i];
            wsum[start + i] += window[i] * window[i];
        }
    }
    // Interior samples see the full overlap (constant window power); the
    // floor keeps the first and last few samples, where the window decays
    // to zero, from amplifying inconsistent-spectrogram content.
    for (o, &w) in out.iter_mut().zip(&wsum) {
        *o /= w.max(1e-2);
    }
    out
}

/// Reconstruct a waveform whose STFT magnitude approximates `magnitudes`
/// (`[t_out][n_bins]` linear scale). Phase starts at zero, so the result is
/// deterministic; each iteration replaces the magnitude, keeps the phase,
/// and applies momentum over successive projections (the fast Griffin-Lim
/// update), which converges far quicker than the plain iteration. The
/// returned signal is always the last projection, so its STFT magnitude
/// matches the target as closely as the iteration got.
pub fn griffin_lim_magnitude(
    magnitudes: &[Vec<f64>],
    cfg: &StftConfig,
    iterations: usize,
) -> Result<Waveform, AudioError> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(AudioError::BadConfig {
            msg: "griffin-lim needs at least one iteration".into(),
        });
    }
    if magnitudes.is_empty() || magnitudes.iter().any(|f| f.len() != cfg.n_bins()) {
        return Err(AudioError::Shape {
            msg: format!(
                "magnitude frames must be non-empty rows of {} bins",
                cfg.n_bins()
            ),
        });
    }

    let zero_phase: Vec<Vec<Complex<f64>>> = magnitudes
        .iter()
        .map(|f| f.iter().map(|&m| Complex::new(m, 0.0)).collect())
        .collect();
    let momentum = 0.99;
    let mut x = istft(&zero_phase, cfg);
    let mut last_projection = Vec::new();
    let mut prev_projection: Option<Vec<f64>> = None;
    for _ in 0..iterations {
        let spectra = stft_complex(&x, cfg);
        let projected: Vec<Vec<Complex<f64>>> = spectra
            .iter()
            .zip(magnitudes)
            .map(|(frame, mags)| {
                frame
                    .iter()
                    .zip(mags)
                    .map(|(&c, &m)| {
                        let norm = c.norm();
                        if norm > 1e-12 {
                            c / norm * m
                        } else {
                            Complex::new(m, 0.0)
                        }
                    })
                    .collect()
            })
            .collect();
        last_projection = istft(&projected, cfg);
        x = match prev_projection.take() {
            Some(prev) => last_projection
                .iter()
                .zip(&prev)
                .map(|(&cur, &old)| cur + momentum * (cur - old))
                .collect(),
            None => last_projection.clone(),
        };
        prev_projection = Some(last_projection.clone());
    }
    Waveform::from_unclamped(last_projection, cfg.sample_rate)
}

/// Map a log-mel spectrogram back to linear STFT magnitudes via the
/// pseudo-inverse of the mel filterbank, clamping negative energies to
/// zero. Bins sitting at the log floor mean "at or below the measurement
/// floor" and invert to zero energy, so analyzed silence round-trips to
/// actual silence.
pub fn mel_to_magnitude(mel: &MelSpectrogram) -> Result<Vec<Vec<f64>>, AudioError> {
    let cfg = &mel.config;
    cfg.validate()?;
    let bank = mel_filterbank(cfg);
    let n_bins = cfg.n_bins();
    let fb = DMatrix::from_fn(cfg.mel_bins, n_bins, |m, k| bank[m][k]);
    let pinv = fb
        .pseudo_inverse(1e-10)
        .map_err(|e| AudioError::Shape {
            msg: format!("filterbank pseudo-inverse failed: {e}"),
        })?;

    let floored = cfg.log_floor.ln() + 1e-12;
    let mut frames = Vec::with_capacity(mel.t_out());
    for t in 0..mel.t_out() {
        let energies = DMatrix::from_fn(cfg.mel_bins, 1, |m, _| {
            let v = mel.frame(t)[m];
            if v <= floored {
                0.0
            } else {
                v.exp()
            }
        });
        let power = &pinv * energies;
        frames.push((0..n_bins).map(|k| power[(k, 0)].max(0.0).sqrt()).collect());
    }
    Ok(frames)
}

/// Invert a mel spectrogram to audio: mel to linear magnitude, then
/// Griffin-Lim.
pub fn griffin_lim(mel: &MelSpectrogram, iterations: usize) -> Result<Waveform, AudioError> {
    let magnitudes = mel_to_magnitude(mel)?;
    griffin_lim_magnitude(&magnitudes, &mel.config, iterations)
}

/// Spectral convergence `||STFT(w)| - M|_F / |M|_F` of a waveform against a
/// target magnitude spectrogram.
pub fn spectral_convergence(
    w: &Waveform,
    target: &[Vec<f64>],
    cfg: &StftConfig,
) -> Result<f64, AudioError> {
    let actual = super::stft_magnitude(w, cfg)?;
    if actual.len() != target.len() {
        return Err(AudioError::Shape {
            msg: format!(
                "waveform yields {} frames, target has {}",
                actual.len(),
                target.len()
            ),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (got, want) in actual.iter().zip(target) {
        for (&g, &m) in got.iter().zip(want) {
            num += (g - m) * (g - m);
            den += m * m;
        }
    }
    Ok((num / den.max(1e-300)).sqrt())
}
