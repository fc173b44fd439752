//! Desk-scale toolkit for cross-lingual, code-switched speech synthesis.
//!
//! The pipeline mirrors a found-data voice-building workflow: filter noisy
//! code-switched recordings by acoustic quality, pretrain a sequence-to-
//! sequence mel synthesizer with Gaussian-mixture attention on the survivors,
//! finetune it on a small target-speaker set with the text encoder frozen,
//! and invert the predicted mel spectrograms with Griffin-Lim.
//!
//! Modules follow the pipeline order:
//!
//! * [`textfront`]: symbol inventories, tokenization, per-symbol language masks
//! * [`audio`]: WAV I/O, STFT/mel analysis, Griffin-Lim, quality metrics
//! * [`numcore`]: reverse-mode autodiff on small dense tensors
//! * [`model`]: the synthesizer itself (encoders, GMM attention, decoder)
//! * [`training`]: Adam, LR schedule, pretrain/finetune loops, checkpoints
//! * [`datasel`]: manifest handling and quality-based corpus filtering
//! * [`evaldiag`]: alignment diagnostics and speaker-signature distances
//! * [`cli`]: the `xtts` command-line entry points
//!
//! Each major capability has a runnable example under `examples/`; start
//! with `full_pipeline` to see the pieces end to end.

pub mod audio;
pub mod cli;
pub mod datasel;
pub mod evaldiag;
pub mod model;
pub mod numcore;
pub mod textfront;
pub mod training;
