//! Short-time analysis: Hann-windowed STFT (no padding) and the triangular
//! area-normalized mel filterbank.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioError, MelSpectrogram, StftConfig, Waveform};

/// Periodic Hann window of `n` samples.
pub(crate) fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the mel filters, one per mel bin.
pub fn mel_centers(cfg: &StftConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let step = (hi - lo) / (cfg.mel_bins + 1) as f64;
    (1..=cfg.mel_bins)
        .map(|m| mel_to_hz(lo + step * m as f64))
        .collect()
}

/// Triangular mel filterbank, `[mel_bins][n_bins]`, each triangle scaled by
/// `2 / (upper - lower)` so filters integrate to the same area.
pub fn mel_filterbank(cfg: &StftConfig) -> Vec<Vec<f64>> {
    let lo = hz_to_mel(cfg.fmin);
    let hi = hz_to_mel(cfg.fmax);
    let step = (hi - lo) / (cfg.mel_bins + 1) as f64;
    let edges: Vec<f64> = (0..cfg.mel_bins + 2)
        .map(|m| mel_to_hz(lo + step * m as f64))
        .collect();

    let n_bins = cfg.n_bins();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    let mut bank = vec![vec![0.0; n_bins]; cfg.mel_bins];
    for m in 0..cfg.mel_bins {
        let (lower, center, upper) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (upper - lower);
        for (k, w) in bank[m].iter_mut().enumerate() {
            let f = k as f64 * bin_hz;
            let tri = if f <= center {
                (f - lower) / (center - lower)
            } else {
                (upper - f) / (upper - center)
            };
            if tri > 0.0 {
                *w = tri * norm;
            }
        }
    }
    bank
}

/// STFT power spectra, `[t_out][n_bins]`, without padding: frame `t` covers
/// samples `t*hop .. t*hop + win_length`.
fn stft_power(samples: &[f64], cfg: &StftConfig) -> Result<Vec<Vec<f64>>, AudioError> {
    let t_out = cfg
        .frame_count(samples.len())
        .ok_or(AudioError::TooShort {
            len: samples.len(),
            need: cfg.win_length,
        })?;
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
        frames.push(buf[..n_bins].iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(frames)
}

/// STFT magnitudes, `[t_out][n_bins]`.
pub fn stft_magnitude(w: &Waveform, cfg: &StftConfig) -> Result<Vec<Vec<f64>>, AudioError> {
    let mut power = stft_power(w.samples(), cfg)?;
    for frame in &mut power {
        for v in frame.iter_mut() {
            *v = v.sqrt();
        }
    }
    Ok(power)
}

/// Analyze a waveform into a log-mel spectrogram:
/// `ln(max(filterbank . power, log_floor))` per frame.
pub fn wav_to_mel(w: &Waveform, cfg: &StftConfig) -> Result<MelSpectrogram, AudioError> {
    cfg.validate()?;
    if w.sample_rate() != cfg.sample_rate {
        return Err(AudioError::RateMismatch {
            path: "<waveform>".into(),
            got: w.sample_rate(),
            want: cfg.sample_rate,
        });
    }
    let power = stft_power(w.samples(), cfg)?;
    let bank = mel_filterbank(cfg);
    let mut values = Vec::with_capacity(power.len() * cfg.mel_bins);
    for frame in &power {
        for filter in &bank {
            let e: f64 = filter
                .iter()
                .zip(frame)
                .map(|(&w, &p)| w * p)
                .sum();
            values.push(e.max(cfg.log_floor).ln());
        }
    }
    MelSpectrogram::from_values(values, power.len(), cfg.clone())
}
