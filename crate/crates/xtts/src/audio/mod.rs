//! Waveform I/O, mel-spectrogram analysis, Griffin-Lim inversion and the
//! acoustic quality metrics used for corpus filtering.
//!
//! Everything here is deterministic: identical input produces bit-identical
//! output, which the rest of the pipeline (checkpoint equality tests,
//! re-synthesis distances) relies on.

mod griffin;
mod metrics;
mod stft;


use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use griffin::{griffin_lim, griffin_lim_magnitude, mel_to_magnitude, spectral_convergence};
pub use metrics::{
    estimate_articulation, estimate_snr, estimate_speaking_rate, measure_quality, QualityMetrics,
};
pub use stft::{mel_centers, mel_filterbank, stft_magnitude, wav_to_mel};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("wav {path}: {source}")]
    Wav {
        path: String,
        source: hound::Error,
    },
    #[error("{path}: unsupported channel count {channels} (mono required)")]
    UnsupportedChannels { path: String, channels: u16 },
    #[error("{path}: unsupported sample format (16-bit PCM required)")]
    UnsupportedFormat { path: String },
    #[error("{path}: sample rate {got} Hz does not match configured {want} Hz")]
    RateMismatch { path: String, got: u32, want: u32 },
    #[error("waveform is invalid: {msg}")]
    InvalidWaveform { msg: String },
    #[error("waveform too short: {len} samples, analysis needs at least {need}")]
    TooShort { len: usize, need: usize },
    #[error("too few frames: {got}, metric needs at least {need}")]
    TooFewFrames { got: usize, need: usize },
    #[error("invalid analysis config: {msg}")]
    BadConfig { msg: String },
    #[error("mel file {path}: {msg}")]
    BadMelFile { path: String, msg: String },
    #[error("shape mismatch: {msg}")]
    Shape { msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Mono waveform with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::InvalidWaveform {
                msg: "no samples".into(),
            });
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidWaveform {
                msg: "zero sample rate".into(),
            });
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::InvalidWaveform {
                msg: format!("sample {bad} outside [-1, 1]"),
            });
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    /// Build from raw synthesis output, clamping into `[-1, 1]`.
    pub fn from_unclamped(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        let clamped = samples
            .into_iter()
            .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        Waveform::new(clamped, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        let e: f64 = self.samples.iter().map(|s| s * s).sum();
        (e / self.samples.len() as f64).sqrt()
    }
}

/// Analysis parameters shared by the spectrogram, Griffin-Lim and the
/// frame-based quality metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub win_length: usize,
    pub mel_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            sample_rate: 16_000,
            fft_size: 1024,
            hop: 200,
            win_length: 800,
            mel_bins: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        let bad = |msg: String| Err(AudioError::BadConfig { msg });
        if self.hop == 0 || self.hop > self.win_length || self.win_length > self.fft_size {
            return bad(format!(
                "need 0 < hop <= win_length <= fft_size, got {}/{}/{}",
                self.hop, self.win_length, self.fft_size
            ));
        }
        if self.mel_bins == 0 {
            return bad("mel_bins must be positive".into());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return bad(format!("need 0 <= fmin < fmax, got {}/{}", self.fmin, self.fmax));
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            return bad(format!(
                "fmax {} exceeds Nyquist {}",
                self.fmax,
                self.sample_rate as f64 / 2.0
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Number of retained FFT bins (DC through Nyquist).
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a waveform of `len` samples (no padding).
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        if len < self.win_length {
            None
        } else {
            Some(1 + (len - self.win_length) / self.hop)
        }
    }
}

/// Log-mel spectrogram: `t_out` rows of `mel_bins` natural-log energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f64>,
    t_out: usize,
    pub config: StftConfig,
}

const MEL_MAGIC: &[u8; 4] = b"MEL1";

impl MelSpectrogram {
    pub fn from_values(
        values: Vec<f64>,
        t_out: usize,
        config: StftConfig,
    ) -> Result<Self, AudioError> {
        if values.len() != t_out * config.mel_bins {
            return Err(AudioError::Shape {
                msg: format!(
                    "{} values cannot form {t_out} frames of {} bins",
                    values.len(),
                    config.mel_bins
                ),
            });
        }
        Ok(MelSpectrogram {
            values,
            t_out,
            config,
        })
    }

    pub fn t_out(&self) -> usize {
        self.t_out
    }

    pub fn mel_bins(&self) -> usize {
        self.config.mel_bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let b = self.config.mel_bins;
        &self.values[t * b..(t + 1) * b]
    }

    /// Write the flat binary layout: `MEL1`, frame count, bin count, then
    /// row-major little-endian 32-bit floats.
    pub fn write_to(&self, path: &Path) -> Result<(), AudioError> {
        let io_err = |source| AudioError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut bytes = Vec::with_capacity(12 + self.values.len() * 4);
        bytes.extend_from_slice(MEL_MAGIC);
        bytes.extend_from_slice(&(self.t_out as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.config.mel_bins as u32).to_le_bytes());
        for &v in &self.values {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let mut file = std::fs::File::create(path).map_err(io_err)?;
        file.write_all(&bytes).map_err(io_err)?;
        Ok(())
    }

    pub fn read_from(path: &Path, config: &StftConfig) -> Result<Self, AudioError> {
        let bad = |msg: String| AudioError::BadMelFile {
            path: path.display().to_string(),
            msg,
        };
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| AudioError::Io {
                path: path.display().to_string(),
                source,
            })?;
        if bytes.len() < 12 || &bytes[0..4] != MEL_MAGIC {
            return Err(bad("missing MEL1 header".into()));
        }
        let t_out = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let mel_bins = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if mel_bins != config.mel_bins {
            return Err(bad(format!(
                "file has {mel_bins} mel bins, config expects {}",
                config.mel_bins
            )));
        }
        let expected = 12 + t_out * mel_bins * 4;
        if bytes.len() != expected {
            return Err(bad(format!(
                "expected {expected} bytes for {t_out}x{mel_bins}, found {}",
                bytes.len()
            )));
        }
        let values = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        MelSpectrogram::from_values(values, t_out, config.clone())
    }
}

/// Read a 16-bit PCM mono WAV file, rejecting any other layout and any
/// sample rate other than `expected_rate`.
pub fn wav_read(path: &Path, expected_rate: u32) -> Result<Waveform, AudioError> {
    let path_str = path.display().to_string();
    let mut reader = hound::WavReader::open(path).map_err(|source| AudioError::Wav {
        path: path_str.clone(),
        source,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::UnsupportedChannels {
            path: path_str,
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat { path: path_str });
    }
    if spec.sample_rate != expected_rate {
        return Err(AudioError::RateMismatch {
            path: path_str,
            got: spec.sample_rate,
            want: expected_rate,
        });
    }
    let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|source| AudioError::Wav {
        path: path_str,
        source,
    })?;
    Waveform::new(
        samples.into_iter().map(|s| s as f64 / 32768.0).collect(),
        expected_rate,
    )
}

/// Write 16-bit PCM mono. A write-then-read round trip reproduces samples
/// to within one quantization step.
pub fn wav_write(path: &Path, w: &Waveform) -> Result<(), AudioError> {
    let path_str = path.display().to_string();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |source| AudioError::Wav {
        path: path_str.clone(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &w.samples {
        let q = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(())
}
