//! The sequence-to-sequence acoustic model: symbol embeddings feed either a
//! shared encoder or two language-masked encoders, a GMM-attention decoder
//! emits mel frames autoregressively, and a residual postnet refines them.
//!
//! All parameters live in a flat name-to-tensor store so the optimizer,
//! freezing rules and the checkpoint format can treat the model uniformly.

mod net;
mod params;


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numcore::NumError;

pub use net::{
    attach_speaker, decoder_step, encode, encode_shared, encode_spe, forward_teacher_forced,
    gmm_attention_step, gmm_position_weights, postnet, synthesize, DecoderState, EncoderOutput,
    GmmAttentionState, SynthOutput, TeacherForced, MEL_PAD_LN,
};
pub use params::{param_shapes, ParamStore, Params};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("speaker id {id} out of range for table of {count} speakers")]
    SpeakerOutOfRange { id: usize, count: usize },
    #[error("language mask has {mask} entries for {t_in} symbols")]
    MaskLength { mask: usize, t_in: usize },
    #[error("SPE encoder requires a language mask")]
    MaskRequired,
    #[error("parameter {name:?} missing from store")]
    MissingParam { name: String },
    #[error("invalid model config: {msg}")]
    BadConfig { msg: String },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Which encoder front-end the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// One encoder consumes the mixed-language sequence directly.
    Shared,
    /// Two monolingual encoders, spliced per the language mask.
    Spe,
}

/// Hyperparameters of the synthesizer. Convolution kernels are fixed at 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder_kind: EncoderKind,
    pub symbol_embed_dim: usize,
    /// Per-direction hidden size; the bidirectional output is twice this.
    pub encoder_hidden: usize,
    pub speaker_embed_dim: usize,
    pub num_speakers: usize,
    /// Gaussian mixture count K of the attention.
    pub attention_mixtures: usize,
    pub attention_rnn_dim: usize,
    pub decoder_rnn_dim: usize,
    pub mel_bins: usize,
    /// Mel frames emitted per decoder step.
    pub reduction_factor: usize,
    pub postnet_channels: usize,
    pub max_decoder_steps: usize,
    /// Floor added to every attention mixture width.
    pub sigma_min: f64,
    /// Stop decoding once sigmoid(gate) exceeds this.
    pub gate_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_kind: EncoderKind::Shared,
            symbol_embed_dim: 128,
            encoder_hidden: 128,
            speaker_embed_dim: 32,
            num_speakers: 1,
            attention_mixtures: 5,
            attention_rnn_dim: 256,
            decoder_rnn_dim: 256,
            mel_bins: 80,
            reduction_factor: 2,
            postnet_channels: 128,
            max_decoder_steps: 2000,
            sigma_min: 0.1,
            gate_threshold: 0.5,
        }
    }
}

impl ModelConfig {
    /// Encoder output width (both directions concatenated).
    pub fn d_enc(&self) -> usize {
        2 * self.encoder_hidden
    }

    /// Width of encoder output with the speaker embedding attached.
    pub fn context_dim(&self) -> usize {
        self.d_enc() + self.speaker_embed_dim
    }

    /// Decoder output width per step.
    pub fn frame_dim(&self) -> usize {
        self.mel_bins * self.reduction_factor
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            self.symbol_embed_dim,
            self.encoder_hidden,
            self.speaker_embed_dim,
            self.num_speakers,
            self.attention_rnn_dim,
            self.decoder_rnn_dim,
            self.mel_bins,
            self.postnet_channels,
            self.max_decoder_steps,
        ];
        if dims.iter().any(|&d| d == 0) {
            return Err(ModelError::BadConfig {
                msg: "all dimensions must be positive".into(),
            });
        }
        if self.reduction_factor < 1 {
            return Err(ModelError::BadConfig {
                msg: "reduction factor must be at least 1".into(),
            });
        }
        if self.attention_mixtures < 1 {
            return Err(ModelError::BadConfig {
                msg: "attention needs at least one mixture".into(),
            });
        }
        if !(self.sigma_min > 0.0) {
            return Err(ModelError::BadConfig {
                msg: "sigma_min must be positive".into(),
            });
        }
        Ok(())
    }

    /// Small configuration for tests and gradient checks.
    pub fn tiny(encoder_kind: EncoderKind) -> Self {
        ModelConfig {
            encoder_kind,
            symbol_embed_dim: 8,
            encoder_hidden: 8,
            speaker_embed_dim: 4,
            num_speakers: 2,
            attention_mixtures: 2,
            attention_rnn_dim: 8,
            decoder_rnn_dim: 8,
            mel_bins: 4,
            reduction_factor: 2,
            postnet_channels: 6,
            max_decoder_steps: 40,
            sigma_min: 0.1,
            gate_threshold: 0.5,
        }
    }
}
