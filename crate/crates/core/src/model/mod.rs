//! The listen-attend-spell encoder/attention/decoder and its contextual
//! extension: a bias encoder over phrase graphemes, a learned no-bias slot,
//! and an additive attention over the phrase embeddings whose context is
//! concatenated to the audio context.
//!
//! All computation goes through a [`Tape`]; inference uses a non-recording
//! tape, so training and decoding share one code path and produce
//! bit-identical values.

mod config;
mod vocab;

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamSet, Shape, Tape, Tensor, Var};

pub use config::ModelConfig;
pub use vocab::{Token, Vocab, BIAS_END, EOS, SOS};

const INIT_RANGE: f64 = 0.05;
const FORGET_BIAS: f64 = 1.0;

/// Bias-attention mask entry: `Open` is a zero offset, `Blocked` is an
/// infinite one (the entry's probability is forced to exactly zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskEntry {
    Open,
    Blocked,
}

#[derive(Debug, Clone, Copy)]
struct LstmIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct HeadIds {
    query: ParamId,
    key: ParamId,
    value: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct BiasAttentionParams {
    pub v: ParamId,
    pub w_h: ParamId,
    pub w_d: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: ParamId,
    encoder: Vec<LstmIds>,
    bias_encoder: LstmIds,
    no_bias: ParamId,
    heads: Vec<HeadIds>,
    attention_out: ParamId,
    bias_attention: BiasAttentionParams,
    decoder: Vec<LstmIds>,
    output_w: ParamId,
    output_b: ParamId,
}

/// Encoder hidden states, one row per (stacked) input frame.
#[derive(Debug, Clone, Copy)]
pub struct EncoderOutput {
    pub h: Var,
    pub frames: usize,
}

/// Phrase embeddings. Row 0 is the learned no-bias vector; rows `1..=N`
/// embed the phrases in order.
#[derive(Debug, Clone, Copy)]
pub struct BiasEmbeddings {
    pub h: Var,
    pub phrases: usize,
}

/// Per-utterance attention keys and values, computed once.
#[derive(Debug, Clone)]
pub struct AudioMemory {
    keys: Vec<Var>,
    values: Vec<Var>,
    pub frames: usize,
}

/// Phrase embeddings with their attention projection precomputed.
#[derive(Debug, Clone, Copy)]
pub struct BiasMemory {
    pub embeddings: BiasEmbeddings,
    projected: Var,
}

/// Source of the bias context at each step.
#[derive(Debug, Clone, Copy)]
pub enum BiasContext {
    /// Plain LAS: the bias context is the no-bias vector itself and no
    /// bias attention is computed.
    Disabled,
    Phrases(BiasMemory),
}

/// Recurrent decoder state: packed `[h; c]` per layer and the previous
/// concatenated context `[c_x; c_z]`.
#[derive(Debug, Clone)]
pub struct DecoderState {
    layers: Vec<Var>,
    context: Var,
}

impl DecoderState {
    pub fn context(&self) -> Var {
        self.context
    }

    pub fn layers(&self) -> &[Var] {
        &self.layers
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: DecoderState,
    pub d: Var,
    pub logits: Var,
    /// Bias-attention probabilities over `N + 1` slots; `None` for
    /// [`BiasContext::Disabled`].
    pub alpha: Option<Var>,
    /// Audio attention weights, one vector per head.
    pub audio_weights: Vec<Var>,
}

#[derive(Debug, Clone)]
pub struct ClasModel {
    config: ModelConfig,
    params: ParamSet,
    layout: Layout,
}

fn lstm_shapes(input: usize, hidden: usize) -> (Shape, Shape) {
    (Shape::Matrix(4 * hidden, input + hidden), Shape::Vector(4 * hidden))
}

/// Registration order and shapes of every parameter.
fn manifest(cfg: &ModelConfig) -> Vec<(alloc::string::String, Shape)> {
    let mut m = Vec::new();
    let v = cfg.vocab.len();
    m.push(("embedding".into(), Shape::Matrix(v, cfg.embedding_dim)));
    for l in 0..cfg.encoder_layers {
        let input = if l == 0 { cfg.feature_dim } else { cfg.encoder_units };
        let (w, b) = lstm_shapes(input, cfg.encoder_units);
        m.push((format!("encoder.{l}.w"), w));
        m.push((format!("encoder.{l}.b"), b));
    }
    let (w, b) = lstm_shapes(cfg.embedding_dim, cfg.bias_encoder_units);
    m.push(("bias_encoder.w".into(), w));
    m.push(("bias_encoder.b".into(), b));
    m.push(("bias_encoder.no_bias".into(), Shape::Vector(cfg.bias_encoder_units)));
    let dh = cfg.head_dim();
    for h in 0..cfg.attention_heads {
        m.push((format!("audio_attention.{h}.query"), Shape::Matrix(dh, cfg.decoder_units)));
        m.push((format!("audio_attention.{h}.key"), Shape::Matrix(dh, cfg.encoder_units)));
        m.push((format!("audio_attention.{h}.value"), Shape::Matrix(dh, cfg.encoder_units)));
    }
    m.push((
        "audio_attention.output".into(),
        Shape::Matrix(cfg.attention_dim, cfg.attention_dim),
    ));
    let a = cfg.attention_dim;
    m.push(("bias_attention.v".into(), Shape::Vector(a)));
    m.push(("bias_attention.w_h".into(), Shape::Matrix(a, cfg.bias_encoder_units)));
    m.push(("bias_attention.w_d".into(), Shape::Matrix(a, cfg.decoder_units)));
    m.push(("bias_attention.b".into(), Shape::Vector(a)));
    for l in 0..cfg.decoder_layers {
        let input = if l == 0 {
            cfg.embedding_dim + cfg.context_dim()
        } else {
            cfg.decoder_units
        };
        let (w, b) = lstm_shapes(input, cfg.decoder_units);
        m.push((format!("decoder.{l}.w"), w));
        m.push((format!("decoder.{l}.b"), b));
    }
    m.push((
        "output.w".into(),
        Shape::Matrix(v, cfg.context_dim() + cfg.decoder_units),
    ));
    m.push(("output.b".into(), Shape::Vector(v)));
    m
}

fn layout(cfg: &ModelConfig, p: &ParamSet) -> Result<Layout> {
    let lstm = |prefix: &str| -> Result<LstmIds> {
        Ok(LstmIds {
            w: p.id(&format!("{prefix}.w"))?,
            b: p.id(&format!("{prefix}.b"))?,
        })
    };
    Ok(Layout {
        embedding: p.id("embedding")?,
        encoder: (0..cfg.encoder_layers)
            .map(|l| lstm(&format!("encoder.{l}")))
            .collect::<Result<_>>()?,
        bias_encoder: lstm("bias_encoder")?,
        no_bias: p.id("bias_encoder.no_bias")?,
        heads: (0..cfg.attention_heads)
            .map(|h| {
                Ok(HeadIds {
                    query: p.id(&format!("audio_attention.{h}.query"))?,
                    key: p.id(&format!("audio_attention.{h}.key"))?,
                    value: p.id(&format!("audio_attention.{h}.value"))?,
                })
            })
            .collect::<Result<_>>()?,
        attention_out: p.id("audio_attention.output")?,
        bias_attention: BiasAttentionParams {
            v: p.id("bias_attention.v")?,
            w_h: p.id("bias_attention.w_h")?,
            w_d: p.id("bias_attention.w_d")?,
            b: p.id("bias_attention.b")?,
        },
        decoder: (0..cfg.decoder_layers)
            .map(|l| lstm(&format!("decoder.{l}")))
            .collect::<Result<_>>()?,
        output_w: p.id("output.w")?,
        output_b: p.id("output.b")?,
    })
}

impl ClasModel {
    /// Fresh model: matrices uniform in ±0.05, forget-gate biases 1.0,
    /// other biases zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in manifest(&config) {
            let mut t = Tensor::zeros(shape);
            let is_bias = name.ends_with(".b");
            let is_lstm = ["encoder", "decoder", "bias_encoder"]
                .iter()
                .any(|p| name.starts_with(p));
            if is_bias && is_lstm {
                let hidden = shape.numel() / 4;
                t.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
            } else if !is_bias {
                for v in t.data_mut() {
                    *v = rng.random_range(-INIT_RANGE..INIT_RANGE);
                }
            }
            params.add(&name, t);
        }
        let layout = layout(&config, &params)?;
        Ok(ClasModel {
            config,
            params,
            layout,
        })
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// configuration.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let expected = manifest(&config);
        if expected.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape), (pname, t)) in expected.iter().zip(params.iter()) {
            if name != pname || *shape != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {pname:?} {:?} does not match expected {name:?} {shape:?}",
                    t.shape()
                )));
            }
        }
        let layout = layout(&config, &params)?;
        Ok(ClasModel {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.config.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn bias_attention_params(&self) -> BiasAttentionParams {
        self.layout.bias_attention
    }

    fn zero_state(&self, tape: &mut Tape<'_>, hidden: usize) -> Var {
        tape.constant(Tensor::zeros(Shape::Vector(2 * hidden)))
    }

    fn check_token(&self, t: Token) -> Result<()> {
        if t >= self.config.vocab.len() {
            return Err(Error::TokenOutOfRange(t));
        }
        Ok(())
    }

    /// Unidirectional stacked LSTM over feature frames (rows of `x`).
    pub fn encode_audio(&self, tape: &mut Tape<'_>, x: &Tensor) -> Result<EncoderOutput> {
        let frames = match x.shape() {
            Shape::Matrix(k, f) if f == self.config.feature_dim => k,
            s => {
                return Err(Error::Shape {
                    op: "encode_audio",
                    left: s,
                    right: Shape::Matrix(0, self.config.feature_dim),
                })
            }
        };
        let hidden = self.config.encoder_units;
        let xv = tape.constant(x.clone());
        let mut states: Vec<Var> = (0..self.layout.encoder.len())
            .map(|_| self.zero_state(tape, hidden))
            .collect();
        let mut outputs = Vec::with_capacity(frames);
        for k in 0..frames {
            let mut input = tape.row(xv, k)?;
            for (state, ids) in states.iter_mut().zip(&self.layout.encoder) {
                *state = tape.lstm(input, *state, tape.param(ids.w), tape.param(ids.b))?;
                input = tape.slice(*state, 0, hidden)?;
            }
            outputs.push(input);
        }
        let h = tape.stack_rows(&outputs)?;
        Ok(EncoderOutput { h, frames })
    }

    /// Embeds each phrase as the final hidden state of the bias encoder run
    /// over its grapheme embeddings. Row 0 is the no-bias vector.
    pub fn encode_bias(&self, tape: &mut Tape<'_>, phrases: &[Vec<Token>]) -> Result<BiasEmbeddings> {
        let hidden = self.config.bias_encoder_units;
        let ids = self.layout.bias_encoder;
        let mut rows = Vec::with_capacity(phrases.len() + 1);
        rows.push(tape.param(self.layout.no_bias));
        for phrase in phrases {
            if phrase.is_empty() {
                return Err(Error::EmptyPhrase);
            }
            let mut state = self.zero_state(tape, hidden);
            for &t in phrase {
                self.check_token(t)?;
                let e = tape.row(tape.param(self.layout.embedding), t)?;
                state = tape.lstm(e, state, tape.param(ids.w), tape.param(ids.b))?;
            }
            rows.push(tape.slice(state, 0, hidden)?);
        }
        let h = tape.stack_rows(&rows)?;
        Ok(BiasEmbeddings {
            h,
            phrases: phrases.len(),
        })
    }

    pub fn audio_memory(&self, tape: &mut Tape<'_>, enc: &EncoderOutput) -> Result<AudioMemory> {
        let mut keys = Vec::with_capacity(self.layout.heads.len());
        let mut values = Vec::with_capacity(self.layout.heads.len());
        for head in &self.layout.heads {
            keys.push(tape.matmul_t(enc.h, tape.param(head.key))?);
            values.push(tape.matmul_t(enc.h, tape.param(head.value))?);
        }
        Ok(AudioMemory {
            keys,
            values,
            frames: enc.frames,
        })
    }

    pub fn bias_memory(&self, tape: &mut Tape<'_>, emb: BiasEmbeddings) -> Result<BiasMemory> {
        let projected = tape.matmul_t(emb.h, tape.param(self.layout.bias_attention.w_h))?;
        Ok(BiasMemory {
            embeddings: emb,
            projected,
        })
    }

    /// Phrase embeddings as plain values, for reuse across utterances at
    /// inference time.
    pub fn embed_phrases(&self, phrases: &[Vec<Token>]) -> Result<Tensor> {
        let mut tape = Tape::inference(&self.params);
        let emb = self.encode_bias(&mut tape, phrases)?;
        Ok(tape.value(emb.h).clone())
    }

    /// Bias memory over precomputed embeddings (row 0 must be the no-bias
    /// vector, as produced by [`ClasModel::embed_phrases`]).
    pub fn bias_memory_from_values(&self, tape: &mut Tape<'_>, h: &Tensor) -> Result<BiasMemory> {
        let rows = match h.shape() {
            Shape::Matrix(r, c) if r >= 1 && c == self.config.bias_encoder_units => r,
            s => {
                return Err(Error::Shape {
                    op: "bias_memory_from_values",
                    left: s,
                    right: Shape::Matrix(1, self.config.bias_encoder_units),
                })
            }
        };
        let hv = tape.constant(h.clone());
        self.bias_memory(
            tape,
            BiasEmbeddings {
                h: hv,
                phrases: rows - 1,
            },
        )
    }

    /// Multi-head scaled dot-product attention of `d` over the encoder
    /// states. Returns the projected context and per-head weights.
    pub fn attend_audio(&self, tape: &mut Tape<'_>, d: Var, mem: &AudioMemory) -> Result<(Var, Vec<Var>)> {
        let scale = 1.0 / libm::sqrt(self.config.head_dim() as f64);
        let mut contexts = Vec::with_capacity(mem.keys.len());
        let mut weights = Vec::with_capacity(mem.keys.len());
        for (h, head) in self.layout.heads.iter().enumerate() {
            let q = tape.matvec(tape.param(head.query), d)?;
            let scores = tape.matvec(mem.keys[h], q)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax(scores, None)?;
            contexts.push(tape.vecmat(a, mem.values[h])?);
            weights.push(a);
        }
        let cat = tape.concat(&contexts)?;
        let c = tape.matvec(tape.param(self.layout.attention_out), cat)?;
        Ok((c, weights))
    }

    /// Additive attention over phrase embeddings:
    /// `u_i = vᵀ tanh(W_h h_i + W_d d + b)`, `alpha = softmax(u - m)`,
    /// `c_z = Σ alpha_i h_i`.
    pub fn attend_bias(
        &self,
        tape: &mut Tape<'_>,
        d: Var,
        mem: &BiasMemory,
        mask: Option<&[MaskEntry]>,
    ) -> Result<(Var, Var)> {
        let slots = mem.embeddings.phrases + 1;
        let allowed: Option<Vec<bool>> = match mask {
            None => None,
            Some(m) if m.len() != slots => {
                return Err(Error::MaskLength {
                    got: m.len(),
                    expected: slots,
                })
            }
            Some(m) if m[0] == MaskEntry::Blocked => {
                return Err(Error::Config("the no-bias slot cannot be masked".into()))
            }
            Some(m) => Some(m.iter().map(|e| *e == MaskEntry::Open).collect()),
        };
        let ba = self.layout.bias_attention;
        let q = tape.linear(tape.param(ba.w_d), d, Some(tape.param(ba.b)))?;
        let pre = tape.add_row(mem.projected, q)?;
        let act = tape.tanh(pre);
        let u = tape.matvec(act, tape.param(ba.v))?;
        let alpha = tape.softmax(u, allowed.as_deref())?;
        let c = tape.vecmat(alpha, mem.embeddings.h)?;
        Ok((c, alpha))
    }

    pub fn initial_state(&self, tape: &mut Tape<'_>) -> DecoderState {
        let hidden = self.config.decoder_units;
        let layers = (0..self.layout.decoder.len())
            .map(|_| self.zero_state(tape, hidden))
            .collect();
        let context = tape.constant(Tensor::zeros(Shape::Vector(self.config.context_dim())));
        DecoderState { layers, context }
    }

    /// Advances the decoder LSTM stack on `[embed(y_prev); c_prev]`. Returns
    /// the new layer states (context untouched) and the top-layer output.
    pub fn decoder_step(&self, tape: &mut Tape<'_>, y_prev: Token, state: &DecoderState) -> Result<(DecoderState, Var)> {
        self.check_token(y_prev)?;
        let hidden = self.config.decoder_units;
        let e = tape.row(tape.param(self.layout.embedding), y_prev)?;
        let mut input = tape.concat(&[e, state.context])?;
        let mut layers = Vec::with_capacity(state.layers.len());
        for (s, ids) in state.layers.iter().zip(&self.layout.decoder) {
            let next = tape.lstm(input, *s, tape.param(ids.w), tape.param(ids.b))?;
            input = tape.slice(next, 0, hidden)?;
            layers.push(next);
        }
        Ok((
            DecoderState {
                layers,
                context: state.context,
            },
            input,
        ))
    }

    /// Unnormalized output scores `W_s [c; d] + b_s`.
    pub fn output_logits(&self, tape: &mut Tape<'_>, context: Var, d: Var) -> Result<Var> {
        let cd = tape.concat(&[context, d])?;
        tape.linear(
            tape.param(self.layout.output_w),
            cd,
            Some(tape.param(self.layout.output_b)),
        )
    }

    /// Output distribution over the vocabulary.
    pub fn output_distribution(&self, tape: &mut Tape<'_>, context: Var, d: Var) -> Result<Var> {
        let logits = self.output_logits(tape, context, d)?;
        tape.softmax(logits, None)
    }

    /// One full decoding step: recurrent update, both attentions, output
    /// logits. The returned state carries `c_t` for the next step.
    pub fn step(
        &self,
        tape: &mut Tape<'_>,
        y_prev: Token,
        state: &DecoderState,
        audio: &AudioMemory,
        bias: &BiasContext,
        mask: Option<&[MaskEntry]>,
    ) -> Result<StepOutput> {
        let (mut next, d) = self.decoder_step(tape, y_prev, state)?;
        let (c_x, audio_weights) = self.attend_audio(tape, d, audio)?;
        let (c_z, alpha) = match bias {
            BiasContext::Disabled => (tape.param(self.layout.no_bias), None),
            BiasContext::Phrases(mem) => {
                let (c, a) = self.attend_bias(tape, d, mem, mask)?;
                (c, Some(a))
            }
        };
        let context = tape.concat(&[c_x, c_z])?;
        let logits = self.output_logits(tape, context, d)?;
        next.context = context;
        Ok(StepOutput {
            state: next,
            d,
            logits,
            alpha,
            audio_weights,
        })
    }

    /// Teacher-forced negative log-likelihood of `target` (which must end
    /// with end-of-sequence), given precomputed audio and bias memories.
    pub fn sequence_loss(
        &self,
        tape: &mut Tape<'_>,
        audio: &AudioMemory,
        bias: &BiasContext,
        target: &[Token],
    ) -> Result<Var> {
        let eos = self.config.vocab.eos();
        if target.last() != Some(&eos) {
            return Err(Error::Config("target must end with end-of-sequence".into()));
        }
        let mut state = self.initial_state(tape);
        let mut prev = self.config.vocab.sos();
        let mut terms = Vec::with_capacity(target.len());
        for &y in target {
            self.check_token(y)?;
            let out = self.step(tape, prev, &state, audio, bias, None)?;
            terms.push(tape.nll(out.logits, y)?);
            state = out.state;
            prev = y;
        }
        tape.add_scalars(&terms)
    }

    /// `-log P(y | x, z)` under teacher forcing. With no phrases this is the
    /// plain sequence loss with only the no-bias slot available.
    pub fn forward_loss(
        &self,
        tape: &mut Tape<'_>,
        x: &Tensor,
        phrases: &[Vec<Token>],
        target: &[Token],
    ) -> Result<Var> {
        let enc = self.encode_audio(tape, x)?;
        let audio = self.audio_memory(tape, &enc)?;
        let emb = self.encode_bias(tape, phrases)?;
        let bias = BiasContext::Phrases(self.bias_memory(tape, emb)?);
        self.sequence_loss(tape, &audio, &bias, target)
    }

    /// Plain LAS loss: the bias path is bypassed entirely.
    pub fn las_loss(&self, tape: &mut Tape<'_>, x: &Tensor, target: &[Token]) -> Result<Var> {
        let enc = self.encode_audio(tape, x)?;
        let audio = self.audio_memory(tape, &enc)?;
        self.sequence_loss(tape, &audio, &BiasContext::Disabled, target)
    }
}
