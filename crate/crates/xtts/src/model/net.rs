//! Network building blocks assembled from autodiff primitives: encoders,
//! GMM attention, the autoregressive decoder and the residual postnet.

use crate::numcore::{
    add, concat, embedding_lookup, exp, gru_cell, matmul, mul, neg, recip, reshape, row,
    sigmoid_scalar, slice, softmax, softplus, sum_all, sum_axis, tanh, GruParams, NumError, Real,
    Tensor,
};
use crate::textfront::{Lang, LanguageMask, SymbolSequence};

use super::params::{Params, KERNEL};
use super::{EncoderKind, ModelConfig, ModelError};

/// Value used to pad targets to a multiple of the reduction factor. This is
/// ln(1e-5), the default log floor of the mel analysis.
pub const MEL_PAD_LN: Real = -11.512925464970229;

/// Encoder output before and after attaching the speaker embedding.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `[T_in, d_enc]` symbol representations.
    pub h: Tensor,
    /// `[T_in, d_enc + speaker_embed_dim]`, every row concatenated with the
    /// same speaker embedding.
    pub h_s: Tensor,
}

/// Recurrent attention state carried across decoder steps.
#[derive(Debug, Clone)]
pub struct GmmAttentionState {
    /// Mixture means `[K]`, non-decreasing over time.
    pub mu: Tensor,
    /// Attention RNN hidden state `[1, attention_rnn_dim]`.
    pub rnn_hidden: Tensor,
    /// Most recent context vector `[1, d_enc + speaker_embed_dim]`.
    pub context: Tensor,
    /// Most recent attention RNN output `[1, attention_rnn_dim]`.
    pub attn_out: Tensor,
}

impl GmmAttentionState {
    pub fn initial(cfg: &ModelConfig) -> Self {
        GmmAttentionState {
            mu: Tensor::zeros(&[cfg.attention_mixtures]),
            rnn_hidden: Tensor::zeros(&[1, cfg.attention_rnn_dim]),
            context: Tensor::zeros(&[1, cfg.context_dim()]),
            attn_out: Tensor::zeros(&[1, cfg.attention_rnn_dim]),
        }
    }
}

/// Decoder state carried across steps.
#[derive(Debug, Clone)]
pub struct DecoderState {
    /// Decoder RNN hidden state `[1, decoder_rnn_dim]`.
    pub hidden: Tensor,
    /// Previously emitted frame group `[1, mel_bins * r]`; all zeros before
    /// the first step (the go frame).
    pub prev_frame: Tensor,
}

impl DecoderState {
    pub fn initial(cfg: &ModelConfig) -> Self {
        DecoderState {
            hidden: Tensor::zeros(&[1, cfg.decoder_rnn_dim]),
            prev_frame: Tensor::zeros(&[1, cfg.frame_dim()]),
        }
    }
}

/// 1-d convolution over the time axis with same-length output. `x` is
/// `[T, c_in]`, `w` is `[k * c_in, c_out]` with weight rows grouped by tap
/// position, `b` is `[c_out]`.
fn conv1d(x: &Tensor, w: &Tensor, b: &Tensor, k: usize) -> Result<Tensor, NumError> {
    let t = x.shape()[0];
    let c_in = x.shape()[1];
    let pad = (k - 1) / 2;
    let zeros = Tensor::zeros(&[pad, c_in]);
    let padded = concat(0, &[&zeros, x, &zeros])?;
    let taps: Vec<Tensor> = (0..k)
        .map(|o| slice(&padded, 0, o, o + t))
        .collect::<Result<_, _>>()?;
    let tap_refs: Vec<&Tensor> = taps.iter().collect();
    let windows = concat(1, &tap_refs)?;
    add(&matmul(&windows, w)?, b)
}

/// Run a GRU over the rows of `x`, forward or reversed, returning the hidden
/// state at every position in forward order.
fn run_gru(x: &Tensor, p: &GruParams, reverse: bool) -> Result<Tensor, NumError> {
    let t = x.shape()[0];
    let mut h = Tensor::zeros(&[1, p.hidden_dim()]);
    let mut outs: Vec<Tensor> = Vec::with_capacity(t);
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..t).rev())
    } else {
        Box::new(0..t)
    };
    for i in order {
        h = gru_cell(&row(x, i)?, &h, p)?;
        outs.push(h.clone());
    }
    if reverse {
        outs.reverse();
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    concat(0, &refs)
}

/// Shared trunk of both encoder variants: embedding lookup, two tanh
/// convolutions, then a bidirectional GRU.
fn encode_core(prefix: &str, ids: &[usize], params: &Params) -> Result<Tensor, ModelError> {
    let emb = embedding_lookup(params.get("embedding.symbols")?, ids)?;
    let c0 = tanh(&conv1d(
        &emb,
        params.get(&format!("{prefix}.conv0.w"))?,
        params.get(&format!("{prefix}.conv0.b"))?,
        KERNEL,
    )?)?;
    let c1 = tanh(&conv1d(
        &c0,
        params.get(&format!("{prefix}.conv1.w"))?,
        params.get(&format!("{prefix}.conv1.b"))?,
        KERNEL,
    )?)?;
    let fwd = run_gru(&c1, &params.gru(&format!("{prefix}.gru_fwd"))?, false)?;
    let bwd = run_gru(&c1, &params.gru(&format!("{prefix}.gru_bwd"))?, true)?;
    Ok(concat(1, &[&fwd, &bwd])?)
}

/// Encode a symbol sequence with the single shared encoder.
pub fn encode_shared(
    seq: &SymbolSequence,
    params: &Params,
    _cfg: &ModelConfig,
) -> Result<Tensor, ModelError> {
    encode_core("encoder.shared", &seq.ids, params)
}

/// Encode with the split-per-language pair: both monolingual encoders consume
/// the full sequence and the outputs are spliced row by row according to the
/// language mask, so position `j` carries exactly the row produced by the
/// encoder of language `mask[j]`.
pub fn encode_spe(
    seq: &SymbolSequence,
    mask: &LanguageMask,
    params: &Params,
    cfg: &ModelConfig,
) -> Result<Tensor, ModelError> {
    let t_in = seq.ids.len();
    if mask.langs.len() != t_in {
        return Err(ModelError::MaskLength {
            mask: mask.langs.len(),
            t_in,
        });
    }
    let h_cn = encode_core("encoder.cn", &seq.ids, params)?;
    let h_en = encode_core("encoder.en", &seq.ids, params)?;
    let d = cfg.d_enc();
    let expand = |ind: Vec<Real>| {
        let mut v = Vec::with_capacity(t_in * d);
        for m in ind {
            v.extend(std::iter::repeat(m).take(d));
        }
        Tensor::from_vec(&[t_in, d], v)
    };
    let m_cn = expand(mask.indicator(Lang::Cn));
    let m_en = expand(mask.indicator(Lang::En));
    Ok(add(&mul(&h_cn, &m_cn)?, &mul(&h_en, &m_en)?)?)
}

/// Dispatch on the configured encoder kind. The mask is required for
/// [`EncoderKind::Spe`] and ignored otherwise.
pub fn encode(
    seq: &SymbolSequence,
    mask: Option<&LanguageMask>,
    params: &Params,
    cfg: &ModelConfig,
) -> Result<Tensor, ModelError> {
    match cfg.encoder_kind {
        EncoderKind::Shared => encode_shared(seq, params, cfg),
        EncoderKind::Spe => encode_spe(seq, mask.ok_or(ModelError::MaskRequired)?, params, cfg),
    }
}

/// Concatenate the speaker embedding onto every encoder row.
pub fn attach_speaker(
    h: &Tensor,
    speaker: usize,
    params: &Params,
    _cfg: &ModelConfig,
) -> Result<EncoderOutput, ModelError> {
    let table = params.get("speaker.table")?;
    let count = table.shape()[0];
    if speaker >= count {
        return Err(ModelError::SpeakerOutOfRange { id: speaker, count });
    }
    let s = embedding_lookup(table, &[speaker])?;
    let t_in = h.shape()[0];
    let reps: Vec<&Tensor> = std::iter::repeat(&s).take(t_in).collect();
    let s_rep = concat(0, &reps)?;
    let h_s = concat(1, &[h, &s_rep])?;
    Ok(EncoderOutput { h: h.clone(), h_s })
}

/// Attention weights over `t_in` positions for a Gaussian mixture with
/// weights `w`, means `mu` and widths `sigma`, all `[K]`. The raw mixture
/// densities at integer positions are renormalized to sum to one.
pub fn gmm_position_weights(
    w: &Tensor,
    mu: &Tensor,
    sigma: &Tensor,
    t_in: usize,
) -> Result<Tensor, NumError> {
    let k = mu.len();
    let mut grid = Vec::with_capacity(t_in * k);
    for j in 0..t_in {
        grid.extend(std::iter::repeat(j as Real).take(k));
    }
    let j_mat = Tensor::from_vec(&[t_in, k], grid);
    let diff = add(&j_mat, &neg(mu)?)?;
    let two_var = mul(&mul(sigma, sigma)?, &Tensor::scalar(2.0))?;
    let expo = neg(&mul(&mul(&diff, &diff)?, &recip(&two_var)?)?)?;
    let weighted = mul(&exp(&expo)?, w)?;
    let raw = sum_axis(&weighted, 1)?;
    // The tiny offset keeps the normalization finite even if every density
    // underflows; in that degenerate case alpha is all zeros instead of NaN.
    let total = add(&sum_all(&raw)?, &Tensor::scalar(1e-300))?;
    mul(&raw, &recip(&total)?)
}

/// One attention step. The attention RNN consumes the previous frame group
/// and the previous context, a linear head produces per-mixture weight, mean
/// increment and width, and the means advance monotonically. Returns the
/// attention weights `[T_in]` and the new state, whose `context` and
/// `attn_out` fields are this step's outputs.
pub fn gmm_attention_step(
    state: &GmmAttentionState,
    h_s: &Tensor,
    m_prev: &Tensor,
    params: &Params,
    cfg: &ModelConfig,
) -> Result<(Tensor, GmmAttentionState), ModelError> {
    let k = cfg.attention_mixtures;
    let t_in = h_s.shape()[0];
    let rnn_in = concat(1, &[m_prev, &state.context])?;
    let o = gru_cell(&rnn_in, &state.rnn_hidden, &params.gru("attention.rnn")?)?;
    let head = add(
        &matmul(&o, params.get("attention.head.w")?)?,
        params.get("attention.head.b")?,
    )?;
    let w = softmax(&reshape(&slice(&head, 1, 0, k)?, &[k])?)?;
    let delta = softplus(&reshape(&slice(&head, 1, k, 2 * k)?, &[k])?)?;
    let sigma = add(
        &softplus(&reshape(&slice(&head, 1, 2 * k, 3 * k)?, &[k])?)?,
        &Tensor::scalar(cfg.sigma_min),
    )?;
    let mu = add(&state.mu, &delta)?;
    let alpha = gmm_position_weights(&w, &mu, &sigma, t_in)?;
    let context = matmul(&reshape(&alpha, &[1, t_in])?, h_s)?;
    let new_state = GmmAttentionState {
        mu,
        rnn_hidden: o.clone(),
        context,
        attn_out: o,
    };
    Ok((alpha, new_state))
}

/// One decoder step: a GRU over the current context and attention output,
/// then linear projections to a frame group `[1, mel_bins * r]` and a stop
/// gate logit `[1, 1]`.
pub fn decoder_step(
    state: &DecoderState,
    context: &Tensor,
    attn_out: &Tensor,
    params: &Params,
    _cfg: &ModelConfig,
) -> Result<(Tensor, Tensor, DecoderState), ModelError> {
    let rnn_in = concat(1, &[context, attn_out])?;
    let hidden = gru_cell(&rnn_in, &state.hidden, &params.gru("decoder.rnn")?)?;
    let frames = add(
        &matmul(&hidden, params.get("decoder.proj.w")?)?,
        params.get("decoder.proj.b")?,
    )?;
    let gate = add(
        &matmul(&hidden, params.get("decoder.gate.w")?)?,
        params.get("decoder.gate.b")?,
    )?;
    let new_state = DecoderState {
        hidden,
        prev_frame: frames.clone(),
    };
    Ok((frames, gate, new_state))
}

/// Residual refinement: three convolutions (tanh on all but the last) added
/// back onto the input spectrogram.
pub fn postnet(m: &Tensor, params: &Params, _cfg: &ModelConfig) -> Result<Tensor, ModelError> {
    let c0 = tanh(&conv1d(
        m,
        params.get("postnet.conv0.w")?,
        params.get("postnet.conv0.b")?,
        KERNEL,
    )?)?;
    let c1 = tanh(&conv1d(
        &c0,
        params.get("postnet.conv1.w")?,
        params.get("postnet.conv1.b")?,
        KERNEL,
    )?)?;
    let c2 = conv1d(
        &c1,
        params.get("postnet.conv2.w")?,
        params.get("postnet.conv2.b")?,
        KERNEL,
    )?;
    Ok(add(m, &c2)?)
}

/// Everything produced by a teacher-forced pass.
#[derive(Debug, Clone)]
pub struct TeacherForced {
    /// Decoder output `[T_pad, mel_bins]` before the postnet.
    pub mel_before: Tensor,
    /// Postnet output `[T_pad, mel_bins]`.
    pub mel_after: Tensor,
    /// Stop gate logits `[steps]`, one per decoder step.
    pub gate_logits: Tensor,
    /// The target padded to a multiple of the reduction factor with
    /// [`MEL_PAD_LN`] frames; loss terms compare against this.
    pub target_padded: Tensor,
    /// Attention weights per step, `steps x T_in`.
    pub alignment: Vec<Vec<Real>>,
    /// Mixture means per step, `steps x K`.
    pub mu_trace: Vec<Vec<Real>>,
}

/// Run the full model with teacher forcing: the decoder consumes ground-truth
/// previous frames from `target` (`[T_out, mel_bins]`) rather than its own
/// predictions.
pub fn forward_teacher_forced(
    seq: &SymbolSequence,
    mask: Option<&LanguageMask>,
    speaker: usize,
    target: &Tensor,
    params: &Params,
    cfg: &ModelConfig,
) -> Result<TeacherForced, ModelError> {
    if target.shape().len() != 2 || target.shape()[1] != cfg.mel_bins || target.shape()[0] == 0 {
        return Err(ModelError::BadConfig {
            msg: format!(
                "target shape {:?} does not match [T_out, {}]",
                target.shape(),
                cfg.mel_bins
            ),
        });
    }
    let r = cfg.reduction_factor;
    let t_out = target.shape()[0];
    let t_pad = t_out.div_ceil(r) * r;
    let target_padded = if t_pad == t_out {
        target.clone()
    } else {
        let pad = Tensor::from_vec(
            &[t_pad - t_out, cfg.mel_bins],
            vec![MEL_PAD_LN; (t_pad - t_out) * cfg.mel_bins],
        );
        concat(0, &[target, &pad])?
    };

    let h = encode(seq, mask, params, cfg)?;
    let enc = attach_speaker(&h, speaker, params, cfg)?;
    let steps = t_pad / r;

    let mut attn = GmmAttentionState::initial(cfg);
    let mut dec = DecoderState::initial(cfg);
    let mut frames: Vec<Tensor> = Vec::with_capacity(steps);
    let mut gates: Vec<Tensor> = Vec::with_capacity(steps);
    let mut alignment: Vec<Vec<Real>> = Vec::with_capacity(steps);
    let mut mu_trace: Vec<Vec<Real>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let m_prev = if t == 0 {
            Tensor::zeros(&[1, cfg.frame_dim()])
        } else {
            reshape(
                &slice(&target_padded, 0, (t - 1) * r, t * r)?,
                &[1, cfg.frame_dim()],
            )?
        };
        let (alpha, attn_next) = gmm_attention_step(&attn, &enc.h_s, &m_prev, params, cfg)?;
        alignment.push(alpha.values().to_vec());
        mu_trace.push(attn_next.mu.values().to_vec());
        let (frame, gate, dec_next) =
            decoder_step(&dec, &attn_next.context, &attn_next.attn_out, params, cfg)?;
        frames.push(reshape(&frame, &[r, cfg.mel_bins])?);
        gates.push(gate);
        attn = attn_next;
        dec = dec_next;
    }

    let frame_refs: Vec<&Tensor> = frames.iter().collect();
    let mel_before = concat(0, &frame_refs)?;
    let mel_after = postnet(&mel_before, params, cfg)?;
    let gate_refs: Vec<&Tensor> = gates.iter().collect();
    let gate_logits = reshape(&concat(0, &gate_refs)?, &[steps])?;

    Ok(TeacherForced {
        mel_before,
        mel_after,
        gate_logits,
        target_padded,
        alignment,
        mu_trace,
    })
}

/// Result of free-running synthesis.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Postnet output `[steps * r, mel_bins]`.
    pub mel: Tensor,
    /// Attention weights per step, `steps x T_in`.
    pub alignment: Vec<Vec<Real>>,
    /// Stop gate probabilities per step.
    pub gate_probs: Vec<Real>,
    /// Decoder steps taken.
    pub steps: usize,
    /// True when decoding hit `max_decoder_steps` without the gate firing.
    pub truncated: bool,
}

/// Free-running synthesis: the decoder consumes its own previous output and
/// stops once the gate probability exceeds the threshold, or after
/// `max_decoder_steps` with the truncation flag set.
pub fn synthesize(
    seq: &SymbolSequence,
    mask: Option<&LanguageMask>,
    speaker: usize,
    params: &Params,
    cfg: &ModelConfig,
) -> Result<SynthOutput, ModelError> {
    let h = encode(seq, mask, params, cfg)?;
    let enc = attach_speaker(&h, speaker, params, cfg)?;

    let mut attn = GmmAttentionState::initial(cfg);
    let mut dec = DecoderState::initial(cfg);
    let mut frames: Vec<Tensor> = Vec::new();
    let mut alignment: Vec<Vec<Real>> = Vec::new();
    let mut gate_probs: Vec<Real> = Vec::new();
    let mut truncated = true;
    for _ in 0..cfg.max_decoder_steps {
        let m_prev = dec.prev_frame.clone();
        let (alpha, attn_next) = gmm_attention_step(&attn, &enc.h_s, &m_prev, params, cfg)?;
        alignment.push(alpha.values().to_vec());
        let (frame, gate, dec_next) =
            decoder_step(&dec, &attn_next.context, &attn_next.attn_out, params, cfg)?;
        frames.push(reshape(&frame, &[cfg.reduction_factor, cfg.mel_bins])?);
        let p = sigmoid_scalar(gate.values()[0]);
        gate_probs.push(p);
        attn = attn_next;
        dec = dec_next;
        if p > cfg.gate_threshold {
            truncated = false;
            break;
        }
    }

    let steps = frames.len();
    let frame_refs: Vec<&Tensor> = frames.iter().collect();
    let mel_before = concat(0, &frame_refs)?;
    let mel = postnet(&mel_before, params, cfg)?;
    Ok(SynthOutput {
        mel,
        alignment,
        gate_probs,
        steps,
        truncated,
    })
}
