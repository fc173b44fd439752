//! Flat parameter storage keyed by dotted names such as
//! `encoder.shared.conv0.w` or `decoder.gate.b`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::numcore::{GruParams, Real, Tape, Tensor};

use super::{EncoderKind, ModelConfig, ModelError};

/// Kernel width of every convolution in the model.
pub(crate) const KERNEL: usize = 5;

/// Detached parameter values, ordered by name.
///
/// The store owns plain tensors; [`ParamStore::tracked`] materializes tape
/// variables for a training step and [`ParamStore::tensors`] hands out cheap
/// untracked views for inference.
#[derive(Debug, Clone)]
pub struct ParamStore {
    values: BTreeMap<String, Tensor>,
}

/// A name-to-tensor view used by the network functions. Tensors may be tape
/// variables (training) or detached constants (inference).
#[derive(Debug, Clone)]
pub struct Params {
    map: BTreeMap<String, Tensor>,
}

impl Params {
    /// Assemble a view from explicit name/tensor pairs. Useful when driving
    /// individual network functions with hand-built tensors.
    pub fn from_entries(entries: impl IntoIterator<Item = (String, Tensor)>) -> Self {
        Params {
            map: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ModelError> {
        self.map.get(name).ok_or_else(|| ModelError::MissingParam {
            name: name.to_string(),
        })
    }

    /// GRU weights under `prefix`, e.g. `decoder.rnn`.
    pub(crate) fn gru(&self, prefix: &str) -> Result<GruParams, ModelError> {
        Ok(GruParams {
            w_ih: self.get(&format!("{prefix}.w_ih"))?.clone(),
            w_hh: self.get(&format!("{prefix}.w_hh"))?.clone(),
            b_ih: self.get(&format!("{prefix}.b_ih"))?.clone(),
            b_hh: self.get(&format!("{prefix}.b_hh"))?.clone(),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// Expected shape of every parameter for `cfg` and a symbol inventory of
/// `vocab` entries, sorted by name.
pub fn param_shapes(cfg: &ModelConfig, vocab: usize) -> Vec<(String, Vec<usize>)> {
    let e = cfg.symbol_embed_dim;
    let h = cfg.encoder_hidden;
    let d = cfg.context_dim();
    let a = cfg.attention_rnn_dim;
    let k3 = 3 * cfg.attention_mixtures;
    let dec = cfg.decoder_rnn_dim;
    let frame = cfg.frame_dim();
    let pc = cfg.postnet_channels;
    let mel = cfg.mel_bins;

    let mut shapes: Vec<(String, Vec<usize>)> = vec![
        ("embedding.symbols".into(), vec![vocab, e]),
        ("speaker.table".into(), vec![cfg.num_speakers, cfg.speaker_embed_dim]),
        ("attention.rnn.w_ih".into(), vec![frame + d, 3 * a]),
        ("attention.rnn.w_hh".into(), vec![a, 3 * a]),
        ("attention.rnn.b_ih".into(), vec![3 * a]),
        ("attention.rnn.b_hh".into(), vec![3 * a]),
        ("attention.head.w".into(), vec![a, k3]),
        ("attention.head.b".into(), vec![k3]),
        ("decoder.rnn.w_ih".into(), vec![d + a, 3 * dec]),
        ("decoder.rnn.w_hh".into(), vec![dec, 3 * dec]),
        ("decoder.rnn.b_ih".into(), vec![3 * dec]),
        ("decoder.rnn.b_hh".into(), vec![3 * dec]),
        ("decoder.proj.w".into(), vec![dec, frame]),
        ("decoder.proj.b".into(), vec![frame]),
        ("decoder.gate.w".into(), vec![dec, 1]),
        ("decoder.gate.b".into(), vec![1]),
        ("postnet.conv0.w".into(), vec![KERNEL * mel, pc]),
        ("postnet.conv0.b".into(), vec![pc]),
        ("postnet.conv1.w".into(), vec![KERNEL * pc, pc]),
        ("postnet.conv1.b".into(), vec![pc]),
        ("postnet.conv2.w".into(), vec![KERNEL * pc, mel]),
        ("postnet.conv2.b".into(), vec![mel]),
    ];

    let encoder_prefixes: &[&str] = match cfg.encoder_kind {
        EncoderKind::Shared => &["encoder.shared"],
        EncoderKind::Spe => &["encoder.cn", "encoder.en"],
    };
    for prefix in encoder_prefixes {
        shapes.push((format!("{prefix}.conv0.w"), vec![KERNEL * e, e]));
        shapes.push((format!("{prefix}.conv0.b"), vec![e]));
        shapes.push((format!("{prefix}.conv1.w"), vec![KERNEL * e, e]));
        shapes.push((format!("{prefix}.conv1.b"), vec![e]));
        for dir in ["gru_fwd", "gru_bwd"] {
            shapes.push((format!("{prefix}.{dir}.w_ih"), vec![e, 3 * h]));
            shapes.push((format!("{prefix}.{dir}.w_hh"), vec![h, 3 * h]));
            shapes.push((format!("{prefix}.{dir}.b_ih"), vec![3 * h]));
            shapes.push((format!("{prefix}.{dir}.b_hh"), vec![3 * h]));
        }
    }

    shapes.sort_by(|a, b| a.0.cmp(&b.0));
    shapes
}

impl ParamStore {
    /// Deterministic random initialization. Weight matrices draw from a
    /// uniform range scaled by the inverse square root of their input
    /// dimension, biases start at zero, and the two lookup tables use a
    /// fixed small range.
    pub fn init(cfg: &ModelConfig, vocab: usize, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        if vocab == 0 {
            return Err(ModelError::BadConfig {
                msg: "symbol inventory must not be empty".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = BTreeMap::new();
        for (name, shape) in param_shapes(cfg, vocab) {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".b")
                || name.ends_with(".b_ih")
                || name.ends_with(".b_hh")
            {
                vec![0.0; n]
            } else {
                let scale = if name == "embedding.symbols" || name == "speaker.table" {
                    0.1
                } else {
                    1.0 / (shape[0] as Real).sqrt()
                };
                (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
            };
            values.insert(name, Tensor::from_vec(&shape, data));
        }
        Ok(ParamStore { values })
    }

    /// Build a store from existing tensors, checking names and shapes.
    pub fn from_values(
        cfg: &ModelConfig,
        vocab: usize,
        values: BTreeMap<String, Tensor>,
    ) -> Result<Self, ModelError> {
        let expected = param_shapes(cfg, vocab);
        if values.len() != expected.len() {
            return Err(ModelError::BadConfig {
                msg: format!(
                    "expected {} parameters, got {}",
                    expected.len(),
                    values.len()
                ),
            });
        }
        for (name, shape) in &expected {
            let t = values.get(name).ok_or_else(|| ModelError::MissingParam {
                name: name.clone(),
            })?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::BadConfig {
                    msg: format!(
                        "parameter {name:?} has shape {:?}, expected {shape:?}",
                        t.shape()
                    ),
                });
            }
        }
        Ok(ParamStore { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ModelError> {
        self.values
            .get(name)
            .ok_or_else(|| ModelError::MissingParam {
                name: name.to_string(),
            })
    }

    /// Replace the values of one parameter, keeping its shape.
    pub fn set(&mut self, name: &str, values: Vec<Real>) -> Result<(), ModelError> {
        let current = self.get(name)?;
        if current.len() != values.len() {
            return Err(ModelError::BadConfig {
                msg: format!(
                    "parameter {name:?} holds {} values, got {}",
                    current.len(),
                    values.len()
                ),
            });
        }
        let shape = current.shape().to_vec();
        self.values
            .insert(name.to_string(), Tensor::from_vec(&shape, values));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Untracked view for inference.
    pub fn tensors(&self) -> Params {
        Params {
            map: self.values.clone(),
        }
    }

    /// Tape-tracked view for a training step. Parameters whose name starts
    /// with one of `frozen_prefixes` stay detached, so no gradient reaches
    /// them and the optimizer skips them.
    pub fn tracked(&self, tape: &Tape, frozen_prefixes: &[&str]) -> Params {
        let map = self
            .values
            .iter()
            .map(|(name, tensor)| {
                let frozen = frozen_prefixes.iter().any(|p| name.starts_with(p));
                let t = if frozen {
                    tensor.clone()
                } else {
                    tape.var_from(tensor.shape(), tensor.values().to_vec())
                };
                (name.clone(), t)
            })
            .collect();
        Params { map }
    }
}
