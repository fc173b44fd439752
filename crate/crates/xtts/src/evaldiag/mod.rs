//! Objective stand-ins for listening tests: attention-alignment
//! diagnostics, teacher-forced loss over a manifest, and a coarse
//! speaker-signature distance between mel spectrograms.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{wav_read, wav_to_mel, AudioError, StftConfig};
use crate::datasel::{CorpusManifest, UtteranceRecord};
use crate::model::{forward_teacher_forced, ModelError};
use crate::numcore::{NumError, Real, Tensor};
use crate::textfront::{derive_language_mask, tokenize, Lexicon, TextError};
use crate::training::{gate_targets, tts_loss, Checkpoint, TrainError};


#[derive(Debug, Error)]
pub enum DiagError {
    #[error("malformed alignment: {msg}")]
    MalformedAlignment { msg: String },
    #[error("mel spectrograms have {a} and {b} bins")]
    BinMismatch { a: usize, b: usize },
    #[error("mel input must be a non-empty rank-2 tensor, got shape {shape:?}")]
    BadMel { shape: Vec<usize> },
    #[error("manifest has no kept records")]
    EmptyManifest,
    #[error("configs disagree: {msg}")]
    ConfigMismatch { msg: String },
    #[error("record {id:?} produced a non-finite loss")]
    NonFiniteLoss { id: String },
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// How well the attention behaved over one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDiagnostics {
    /// Mean over decoder steps of the largest attention weight.
    pub focus_rate: Real,
    /// Fraction of encoder positions whose cumulative attention reaches 0.5.
    pub coverage: Real,
    /// Steps whose argmax moved backwards by more than two positions.
    pub monotonicity_violations: usize,
    /// Whether decoding stopped on its own rather than being cut off.
    pub terminated: bool,
}

/// Summarize an alignment matrix of `steps x t_in` attention rows.
///
/// Trailing all-zero rows (padding after the decoder stopped) are ignored.
/// Every remaining row must sum to one within 1e-5.
pub fn diagnose_alignment(
    alignment: &[Vec<Real>],
    terminated: bool,
) -> Result<AlignmentDiagnostics, DiagError> {
    let malformed = |msg: String| Err(DiagError::MalformedAlignment { msg });

    let live = alignment
        .iter()
        .rposition(|row| row.iter().any(|&v| v != 0.0))
        .map(|last| &alignment[..=last])
        .unwrap_or(&[]);
    if live.is_empty() {
        return malformed("no non-zero attention rows".into());
    }
    let t_in = live[0].len();
    if t_in == 0 {
        return malformed("attention rows are empty".into());
    }

    let mut focus_total = 0.0;
    let mut cumulative = vec![0.0; t_in];
    let mut violations = 0usize;
    let mut prev_argmax: Option<usize> = None;
    for (step, row) in live.iter().enumerate() {
        if row.len() != t_in {
            return malformed(format!(
                "row {step} has {} entries, expected {t_in}",
                row.len()
            ));
        }
        let sum: Real = row.iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return malformed(format!("row {step} sums to {sum}"));
        }
        let mut argmax = 0;
        for (j, &v) in row.iter().enumerate() {
            cumulative[j] += v;
            if v > row[argmax] {
                argmax = j;
            }
        }
        focus_total += row[argmax];
        if let Some(prev) = prev_argmax {
            if prev > argmax && prev - argmax > 2 {
                violations += 1;
            }
        }
        prev_argmax = Some(argmax);
    }

    let covered = cumulative.iter().filter(|&&c| c >= 0.5).count();
    Ok(AlignmentDiagnostics {
        focus_rate: focus_total / live.len() as Real,
        coverage: covered as Real / t_in as Real,
        monotonicity_violations: violations,
        terminated,
    })
}

/// Per-bin time mean and standard deviation, concatenated to `2 * bins`.
fn signature(mel: &Tensor) -> Result<Vec<Real>, DiagError> {
    let shape = mel.shape();
    if shape.len() != 2 || shape[0] == 0 || shape[1] == 0 {
        return Err(DiagError::BadMel {
            shape: shape.to_vec(),
        });
    }
    let (t_out, bins) = (shape[0], shape[1]);
    let values = mel.values();
    let mut sig = vec![0.0; 2 * bins];
    for j in 0..bins {
        let column = (0..t_out).map(|t| values[t * bins + j]);
        let mean = column.clone().sum::<Real>() / t_out as Real;
        let var = column.map(|v| (v - mean) * (v - mean)).sum::<Real>() / t_out as Real;
        sig[j] = mean;
        sig[bins + j] = var.sqrt();
    }
    Ok(sig)
}

/// Euclidean distance between the signatures of two `[t, bins]` mels.
/// Zero for identical inputs, symmetric, and insensitive to frame order.
pub fn speaker_signature_distance(a: &Tensor, b: &Tensor) -> Result<Real, DiagError> {
    let sa = signature(a)?;
    let sb = signature(b)?;
    if a.shape()[1] != b.shape()[1] {
        return Err(DiagError::BinMismatch {
            a: a.shape()[1],
            b: b.shape()[1],
        });
    }
    let dist = sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<Real>()
        .sqrt();
    Ok(dist)
}

/// One line of the diagnostics report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordEval {
    pub id: String,
    pub loss: Real,
    #[serde(flatten)]
    pub diagnostics: AlignmentDiagnostics,
}

/// Teacher-forced evaluation over every kept record of a manifest.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mean_loss: Real,
    pub records: Vec<RecordEval>,
}

/// The closing line of a report file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub records: usize,
    pub mean_loss: Real,
    pub mean_focus_rate: Real,
}

impl EvalReport {
    pub fn summary(&self) -> ReportSummary {
        let n = self.records.len() as Real;
        ReportSummary {
            records: self.records.len(),
            mean_loss: self.mean_loss,
            mean_focus_rate: self.records.iter().map(|r| r.diagnostics.focus_rate).sum::<Real>()
                / n,
        }
    }
}

/// Run the model with teacher forcing on each kept record and collect the
/// loss and alignment diagnostics. Audio analysis runs in parallel; the
/// forward passes are sequential because the tensor graph is single
/// threaded by design.
pub fn teacher_forced_eval(
    ckpt: &Checkpoint,
    manifest: &CorpusManifest,
    lexicon: Option<&Lexicon>,
    stft: &StftConfig,
) -> Result<EvalReport, DiagError> {
    stft.validate()?;
    if stft.mel_bins != ckpt.config.mel_bins {
        return Err(DiagError::ConfigMismatch {
            msg: format!(
                "analysis produces {} mel bins but the checkpoint expects {}",
                stft.mel_bins, ckpt.config.mel_bins
            ),
        });
    }
    let records: Vec<&UtteranceRecord> = manifest.kept_records().collect();
    if records.is_empty() {
        return Err(DiagError::EmptyManifest);
    }

    let mels: Vec<Result<(usize, Vec<Real>), DiagError>> = records
        .par_iter()
        .map(|record| {
            let wav = wav_read(&manifest.resolve_audio(record), stft.sample_rate)?;
            let mel = wav_to_mel(&wav, stft)?;
            Ok((mel.t_out(), mel.values().to_vec()))
        })
        .collect();

    let params = ckpt.params.tensors();
    let mut evals = Vec::with_capacity(records.len());
    let mut total = 0.0;
    for (record, mel) in records.iter().zip(mels) {
        let (t_out, values) = mel?;
        let target = Tensor::from_vec(&[t_out, stft.mel_bins], values);
        let seq = tokenize(&record.text, &ckpt.inventory, lexicon)?;
        let spans = record.span_tuples();
        let mask = derive_language_mask(&record.text, &seq, spans.as_deref())?;
        let row = ckpt.speaker_row(&record.speaker)?;

        let tf = forward_teacher_forced(&seq, Some(&mask), row, &target, &params, &ckpt.config)?;
        let steps = tf.gate_logits.shape()[0];
        let loss = tts_loss(
            &tf.mel_before,
            &tf.mel_after,
            &tf.gate_logits,
            &tf.target_padded,
            &gate_targets(steps),
        )?
        .item();
        if !loss.is_finite() {
            return Err(DiagError::NonFiniteLoss {
                id: record.id.clone(),
            });
        }
        let diagnostics = diagnose_alignment(&tf.alignment, true)?;
        total += loss;
        evals.push(RecordEval {
            id: record.id.clone(),
            loss,
            diagnostics,
        });
    }

    Ok(EvalReport {
        mean_loss: total / evals.len() as Real,
        records: evals,
    })
}

/// Write a report as JSON lines: one object per record, then a summary.
pub fn write_report(path: &Path, report: &EvalReport) -> Result<(), DiagError> {
    let mut out = String::new();
    for record in &report.records {
        out.push_str(&serde_json::to_string(record).expect("report lines serialize"));
        out.push('\n');
    }
    out.push_str(&serde_json::to_string(&report.summary()).expect("summary serializes"));
    out.push('\n');
    fs::write(path, out).map_err(|source| DiagError::Io {
        path: path.to_path_buf(),
        source,
    })
}
