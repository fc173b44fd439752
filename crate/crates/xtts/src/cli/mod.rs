//! Command-line front end: one subcommand per pipeline stage, a JSON run
//! configuration, and one-line machine-parsable errors on exit code 2.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{griffin_lim, wav_write, AudioError, MelSpectrogram, StftConfig};
use crate::datasel::{
    filter_corpus, load_manifest, merge_manifests, save_manifest, score_corpus, top_speakers,
    CorpusManifest, DataError,
};
use crate::evaldiag::{teacher_forced_eval, write_report, DiagError};
use crate::model::{synthesize, ModelConfig, ModelError};
use crate::numcore::NumError;
use crate::textfront::{
    build_inventory, derive_language_mask, tokenize, Lexicon, Mode, SymbolInventory, TextError,
};
use crate::training::{
    finetune, load_checkpoint, pretrain, save_checkpoint, TrainConfig, TrainError,
};

#[cfg(test)]
mod tests;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {}: {msg}", path.display())]
    BadConfig { path: PathBuf, msg: String },
    #[error("invalid inventory {}: {msg}", path.display())]
    BadInventory { path: PathBuf, msg: String },
    #[error("invalid thread count {value:?}")]
    BadThreads { value: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Diag(#[from] DiagError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Everything a run can configure, as one JSON document. Every field has
/// a default, and unknown keys are rejected with the offending key named.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub stft: StftConfig,
    /// Tokenization mode used when a command builds an inventory itself.
    pub mode: Mode,
    /// Phoneme lexicon file, `word<TAB>ph1 ph2 ...` per line.
    pub lexicon: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            stft: StftConfig::default(),
            mode: Mode::Character,
            lexicon: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Char,
    Phoneme,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Char => Mode::Character,
            ModeArg::Phoneme => Mode::Phoneme,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "xtts",
    version,
    about = "Cross-lingual code-switched speech synthesis toolkit"
)]
pub struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; the XTTS_THREADS variable is the fallback.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a symbol inventory from the texts of a manifest.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach quality metrics to every record of a manifest.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mark the worst fraction of each speaker's records as dropped.
    Filter {
        #[arg(long)]
        manifest: PathBuf,
        /// Fraction of each speaker's records to drop, in [0, 1).
        #[arg(long)]
        drop: f64,
        /// Keep only the N highest-quality speakers first.
        #[arg(long)]
        top_speakers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concatenate a found-data manifest and a target-speaker manifest.
    Merge {
        #[arg(long)]
        found: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from scratch on the kept records of a manifest.
    Pretrain {
        #[arg(long)]
        manifest: PathBuf,
        /// Inventory built by `prepare`; derived from the manifest if absent.
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt a checkpoint to new data with the encoder frozen.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a mel spectrogram (and optionally a waveform) from text.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        text: String,
        /// Speaker name as listed in the checkpoint.
        #[arg(long)]
        speaker: String,
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long)]
        mel: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        griffin_lim_iters: usize,
    },
    /// Teacher-forced loss and alignment diagnostics over a manifest.
    Diag {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_string(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Load and validate the run configuration, applying the seed override.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = match path {
        None => RunConfig::default(),
        Some(p) => serde_json::from_str(&read_to_string(p)?).map_err(|e| CliError::BadConfig {
            path: p.to_path_buf(),
            msg: e.to_string(),
        })?,
    };
    if let Some(seed) = seed {
        cfg.training.seed = seed;
    }
    cfg.model.validate()?;
    cfg.training.validate()?;
    cfg.stft.validate()?;
    Ok(cfg)
}

fn load_lexicon(path: Option<&Path>) -> Result<Option<Lexicon>, CliError> {
    path.map(Lexicon::load).transpose().map_err(CliError::from)
}

fn inventory_from_manifest(
    manifest: &CorpusManifest,
    mode: Mode,
    lexicon: Option<&Lexicon>,
) -> Result<SymbolInventory, CliError> {
    let texts: Vec<&str> = manifest.records.iter().map(|r| r.text.as_str()).collect();
    Ok(build_inventory(&texts, mode, lexicon)?)
}

fn load_inventory(path: &Path) -> Result<SymbolInventory, CliError> {
    let bad = |msg: String| CliError::BadInventory {
        path: path.to_path_buf(),
        msg,
    };
    let inv: SymbolInventory =
        serde_json::from_str(&read_to_string(path)?).map_err(|e| bad(e.to_string()))?;
    inv.validate().map_err(|e| bad(e.to_string()))?;
    Ok(inv)
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("XTTS_THREADS") {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| CliError::BadThreads { value: v })?),
            Err(_) => None,
        },
    };
    let Some(n) = n else { return Ok(()) };
    if n == 0 {
        return Err(CliError::BadThreads {
            value: n.to_string(),
        });
    }
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Execute one parsed invocation. Prints progress to stdout; any error
/// bubbles up for the binary to report on one line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads(cli.threads)?;
    let config = load_config(cli.config.as_deref(), cli.seed)?;

    match cli.command {
        Command::Prepare {
            manifest,
            mode,
            lexicon,
            out,
        } => {
            let lexicon = load_lexicon(lexicon.as_deref())?;
            let manifest = load_manifest(&manifest)?;
            let inv = inventory_from_manifest(&manifest, mode.into(), lexicon.as_ref())?;
            let json = serde_json::to_string_pretty(&inv).expect("inventory serializes");
            write_string(&out, &format!("{json}\n"))?;
            println!("wrote {} ({} symbols)", out.display(), inv.size());
        }
        Command::Score { manifest, out } => {
            let lexicon = load_lexicon(config.lexicon.as_deref())?;
            let manifest = load_manifest(&manifest)?;
            let inv = inventory_from_manifest(&manifest, config.mode, lexicon.as_ref())?;
            let scored = score_corpus(&manifest, &inv, lexicon.as_ref(), &config.stft);
            for warning in &scored.warnings {
                eprintln!("warning: {warning}");
            }
            save_manifest(&out, &scored.manifest)?;
            println!("wrote {} ({} records)", out.display(), scored.manifest.len());
        }
        Command::Filter {
            manifest,
            drop,
            top_speakers: top,
            out,
        } => {
            if !(0.0..1.0).contains(&drop) {
                return Err(DataError::BadDropFraction { value: drop }.into());
            }
            let mut manifest = load_manifest(&manifest)?;
            if let Some(n) = top {
                manifest = top_speakers(&manifest, n)?;
            }
            let filtered = filter_corpus(&manifest, drop)?;
            save_manifest(&out, &filtered)?;
            let kept = filtered.kept_records().count();
            println!("wrote {} ({kept} of {} kept)", out.display(), filtered.len());
        }
        Command::Merge { found, target, out } => {
            let found = load_manifest(&found)?;
            let target = load_manifest(&target)?;
            let merged = merge_manifests(&found, &target)?;
            save_manifest(&out, &merged)?;
            println!("wrote {} ({} records)", out.display(), merged.len());
        }
        Command::Pretrain {
            manifest,
            inventory,
            out,
        } => {
            let lexicon = load_lexicon(config.lexicon.as_deref())?;
            let manifest = load_manifest(&manifest)?;
            let inv = match inventory {
                Some(p) => load_inventory(&p)?,
                None => inventory_from_manifest(&manifest, config.mode, lexicon.as_ref())?,
            };
            let outcome = pretrain(
                &manifest,
                &inv,
                lexicon.as_ref(),
                &config.model,
                &config.training,
                &config.stft,
            )?;
            save_checkpoint(&out, &outcome.checkpoint)?;
            println!(
                "wrote {} (step {}, loss {:.4} -> {:.4})",
                out.display(),
                outcome.checkpoint.step,
                outcome.initial_loss,
                outcome.final_loss
            );
        }
        Command::Finetune {
            ckpt,
            manifest,
            out,
        } => {
            let lexicon = load_lexicon(config.lexicon.as_deref())?;
            let ckpt = load_checkpoint(&ckpt)?;
            let manifest = load_manifest(&manifest)?;
            let outcome = finetune(&ckpt, &manifest, lexicon.as_ref(), &config.training, &config.stft)?;
            save_checkpoint(&out, &outcome.checkpoint)?;
            println!(
                "wrote {} (step {}, loss {:.4} -> {:.4})",
                out.display(),
                outcome.checkpoint.step,
                outcome.initial_loss,
                outcome.final_loss
            );
        }
        Command::Synth {
            ckpt,
            text,
            speaker,
            wav,
            mel,
            griffin_lim_iters,
        } => {
            let lexicon = load_lexicon(config.lexicon.as_deref())?;
            let ckpt = load_checkpoint(&ckpt)?;
            let mut stft = config.stft.clone();
            stft.mel_bins = ckpt.config.mel_bins;
            let row = ckpt.speaker_row(&speaker)?;
            let seq = tokenize(&text, &ckpt.inventory, lexicon.as_ref())?;
            let mask = derive_language_mask(&text, &seq, None)?;
            let output = synthesize(&seq, Some(&mask), row, &ckpt.params.tensors(), &ckpt.config)?;
            println!(
                "synthesized {} frames in {} decoder steps{}",
                output.mel.shape()[0],
                output.steps,
                if output.truncated { " (truncated)" } else { "" }
            );
            if wav.is_some() || mel.is_some() {
                let spec = MelSpectrogram::from_values(
                    output.mel.values().to_vec(),
                    output.mel.shape()[0],
                    stft,
                )?;
                if let Some(path) = mel {
                    spec.write_to(&path)?;
                    println!("wrote {}", path.display());
                }
                if let Some(path) = wav {
                    let waveform = griffin_lim(&spec, griffin_lim_iters)?;
                    wav_write(&path, &waveform)?;
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Diag {
            ckpt,
            manifest,
            out,
        } => {
            let lexicon = load_lexicon(config.lexicon.as_deref())?;
            let ckpt = load_checkpoint(&ckpt)?;
            let manifest = load_manifest(&manifest)?;
            let report = teacher_forced_eval(&ckpt, &manifest, lexicon.as_ref(), &config.stft)?;
            write_report(&out, &report)?;
            println!(
                "wrote {} ({} records, mean loss {:.4})",
                out.display(),
                report.records.len(),
                report.mean_loss
            );
        }
    }
    Ok(())
}
