//! Acoustic quality metrics behind the corpus filter: percentile-energy
//! SNR, transcript speaking rate, and log-energy-spread articulation.
//!
//! All three are deliberately simple and deterministic. They rank
//! utterances within a speaker; absolute calibration does not matter.

use serde::{Deserialize, Serialize};

use crate::textfront::SymbolSequence;

use super::{AudioError, StftConfig, Waveform};

const MIN_FRAMES: usize = 20;

/// The three corpus-filter metrics for one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub snr_db: f64,
    /// Content symbols per second.
    pub speaking_rate: f64,
    /// Frame log-energy standard deviation in dB.
    pub articulation: f64,
}

impl QualityMetrics {
    /// False when any field is non-finite, i.e. the `+inf` SNR sentinel for
    /// digital silence. Non-finite metrics cannot enter z-score composites,
    /// so such records count as unscorable.
    pub fn is_finite(&self) -> bool {
        self.snr_db.is_finite() && self.speaking_rate.is_finite() && self.articulation.is_finite()
    }
}

/// All three quality metrics for one utterance.
pub fn measure_quality(
    w: &Waveform,
    seq: &SymbolSequence,
    cfg: &StftConfig,
) -> Result<QualityMetrics, AudioError> {
    Ok(QualityMetrics {
        snr_db: estimate_snr(w, cfg)?,
        speaking_rate: estimate_speaking_rate(w, seq),
        articulation: estimate_articulation(w, cfg)?,
    })
}

/// Mean energy per non-overlapping hop-length frame.
fn frame_energies(w: &Waveform, cfg: &StftConfig) -> Result<Vec<f64>, AudioError> {
    let n = w.len() / cfg.hop;
    if n < MIN_FRAMES {
        return Err(AudioError::TooFewFrames {
            got: n,
            need: MIN_FRAMES,
        });
    }
    Ok((0..n)
        .map(|t| {
            let frame = &w.samples()[t * cfg.hop..(t + 1) * cfg.hop];
            frame.iter().map(|s| s * s).sum::<f64>() / cfg.hop as f64
        })
        .collect())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Percentile-energy SNR in dB: noise floor is the mean energy of the
/// lowest-decile frames, signal the mean of the top half. Returns `+inf`
/// when the noise floor vanishes (digital silence, exact zero padding).
/// Scale-invariant: scaling the waveform cancels in the ratio.
pub fn estimate_snr(w: &Waveform, cfg: &StftConfig) -> Result<f64, AudioError> {
    let energies = sorted(frame_energies(w, cfg)?);
    let n = energies.len();
    let decile = (n / 10).max(1);
    let noise = energies[..decile].iter().sum::<f64>() / decile as f64;
    let half = (n / 2).max(1);
    let signal = energies[n - half..].iter().sum::<f64>() / half as f64;
    if noise < 1e-12 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Content symbols per second; the eos marker does not count.
pub fn estimate_speaking_rate(w: &Waveform, seq: &SymbolSequence) -> f64 {
    (seq.len() - 1) as f64 / w.duration_seconds()
}

/// Standard deviation (dB) of per-frame log energy over frames louder than
/// the noise decile. Flat, mumbled speech scores low. All-silence input has
/// no frames above its own decile and scores exactly 0.
pub fn estimate_articulation(w: &Waveform, cfg: &StftConfig) -> Result<f64, AudioError> {
    let energies = frame_energies(w, cfg)?;
    let ranked = sorted(energies.clone());
    let decile = (ranked.len() / 10).max(1);
    let threshold = ranked[decile - 1];
    let kept: Vec<f64> = energies
        .into_iter()
        .filter(|&e| e > threshold)
        .map(|e| 10.0 * e.log10())
        .collect();
    if kept.is_empty() {
        return Ok(0.0);
    }
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let var = kept.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / kept.len() as f64;
    Ok(var.sqrt())
}
