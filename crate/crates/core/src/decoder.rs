//! Length-synchronous beam search over the CLAS model with optional
//! shallow fusion and bias-conditioning masks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::conditioning::{compute_mask, ConditionedEntry};
use crate::error::{Error, Result};
use crate::model::{BiasContext, ClasModel, Token};
use crate::tensor::{kernels, Tape, Tensor};

/// An external grapheme-level scorer added to the model score with weight
/// `lambda`.
pub trait Fusion {
    type State: Clone;
    fn start(&self) -> Self::State;
    /// Consumes one grapheme; returns the new state and the score increment.
    fn advance(&self, state: &Self::State, grapheme: char) -> (Self::State, f64);
    /// Increment for ending the hypothesis in `state`.
    fn finish(&self, state: &Self::State) -> f64;
}

/// Fusion that always scores zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoFusion;

impl Fusion for NoFusion {
    type State = ();
    fn start(&self) {}
    fn advance(&self, _: &(), _: char) -> ((), f64) {
        ((), 0.0)
    }
    fn finish(&self, _: &()) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DecodeConfig {
    pub beam_width: usize,
    /// Longest hypothesis in tokens, end-of-sequence included.
    pub max_len: usize,
    pub lambda: f64,
    pub n_best: usize,
    /// Keep the bias-attention rows of every hypothesis.
    pub record_attention: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 8,
            max_len: 80,
            lambda: 0.0,
            n_best: 1,
            record_attention: false,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 || self.max_len == 0 || self.n_best == 0 {
            return Err(Error::Config("beam_width, max_len and n_best must be positive".into()));
        }
        if self.n_best > self.beam_width {
            return Err(Error::Config("n_best cannot exceed beam_width".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// A bias list ready for decoding: phrase embeddings computed once, plus
/// optional conditioning prefixes aligned with the phrases.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedBias {
    embeddings: Tensor,
    prefixes: Option<Vec<ConditionedEntry>>,
    labels: Vec<String>,
}

impl PreparedBias {
    /// No phrases: only the no-bias slot.
    pub fn empty(model: &ClasModel) -> Result<Self> {
        PreparedBias::new(model, &[])
    }

    pub fn new(model: &ClasModel, phrases: &[String]) -> Result<Self> {
        let tokens: Vec<Vec<Token>> = phrases
            .iter()
            .map(|p| model.vocab().encode(p))
            .collect::<Result<_>>()?;
        Ok(PreparedBias {
            embeddings: model.embed_phrases(&tokens)?,
            prefixes: None,
            labels: phrases.to_vec(),
        })
    }

    /// Embeds each entry's phrase; its prefix gates the attention slot.
    pub fn conditioned(model: &ClasModel, entries: &[ConditionedEntry]) -> Result<Self> {
        let phrases: Vec<String> = entries.iter().map(ConditionedEntry::embedded).collect();
        let mut p = PreparedBias::new(model, &phrases)?;
        p.prefixes = Some(entries.to_vec());
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn embeddings(&self) -> &Tensor {
        &self.embeddings
    }

    pub fn entries(&self) -> Option<&[ConditionedEntry]> {
        self.prefixes.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, `</bias>` included, end-of-sequence excluded.
    pub tokens: Vec<Token>,
    /// Text with `</bias>` removed.
    pub text: String,
    pub model_score: f64,
    pub fusion_score: f64,
    pub total: f64,
    pub finished: bool,
    /// Bias-attention probabilities per step (`N + 1` each) when recorded.
    pub attention: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Sorted by non-increasing total score, at most `n_best` long.
    pub hypotheses: Vec<Hypothesis>,
    /// False when no hypothesis reached end-of-sequence within `max_len`.
    pub finished: bool,
}

impl DecodeOutput {
    pub fn best(&self) -> &Hypothesis {
        &self.hypotheses[0]
    }
}

struct Live<S> {
    tokens: Vec<Token>,
    text: String,
    model_score: f64,
    fusion_score: f64,
    state: crate::model::DecoderState,
    fusion: S,
    attention: Vec<Vec<f64>>,
}

struct Candidate<S> {
    parent: usize,
    token: Token,
    model_score: f64,
    fusion_score: f64,
    total: f64,
    fusion: S,
}

/// Total order used for ranking: higher score first, then shorter, then
/// lexicographically smaller token sequence.
fn rank(a_total: f64, a_tokens: &[Token], b_total: f64, b_tokens: &[Token]) -> Ordering {
    b_total
        .total_cmp(&a_total)
        .then(a_tokens.len().cmp(&b_tokens.len()))
        .then_with(|| a_tokens.cmp(b_tokens))
}

fn candidate_tokens<S>(live: &[Live<S>], c: &Candidate<S>) -> Vec<Token> {
    let mut t = live[c.parent].tokens.clone();
    t.push(c.token);
    t
}

fn finish_hyp<S>(model: &ClasModel, h: Live<S>, total: f64, finished: bool) -> Hypothesis {
    let text = model.vocab().decode(&h.tokens, true).unwrap_or_default();
    Hypothesis {
        tokens: h.tokens,
        text,
        model_score: h.model_score,
        fusion_score: h.fusion_score,
        total,
        finished,
        attention: h.attention,
    }
}

/// Beam search for `argmax log P(y|x,z) + lambda * log P_C(y)`.
pub fn beam_search<F: Fusion>(
    model: &ClasModel,
    features: &Tensor,
    bias: &PreparedBias,
    fusion: Option<&F>,
    cfg: &DecodeConfig,
) -> Result<DecodeOutput> {
    cfg.validate()?;
    let vocab = model.vocab();
    let (sos, eos, bias_end) = (vocab.sos(), vocab.eos(), vocab.bias_end());
    let fuse = fusion.filter(|_| cfg.lambda > 0.0);

    let mut tape = Tape::inference(model.params());
    let enc = model.encode_audio(&mut tape, features)?;
    let audio = model.audio_memory(&mut tape, &enc)?;
    let mem = model.bias_memory_from_values(&mut tape, &bias.embeddings)?;
    let ctx = BiasContext::Phrases(mem);

    let start_fusion = fuse.map(|f| f.start());
    let mut live: Vec<Live<Option<F::State>>> = vec![Live {
        tokens: Vec::new(),
        text: String::new(),
        model_score: 0.0,
        fusion_score: 0.0,
        state: model.initial_state(&mut tape),
        fusion: start_fusion,
        attention: Vec::new(),
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    let v = vocab.len();
    let mut logp = vec![0.0; v];

    for _ in 0..cfg.max_len {
        let mut candidates: Vec<Candidate<Option<F::State>>> = Vec::new();
        let mut next_states = Vec::with_capacity(live.len());
        let mut alphas = Vec::with_capacity(live.len());
        for (pi, h) in live.iter().enumerate() {
            let mask = bias.prefixes.as_ref().map(|e| compute_mask(e, &h.text));
            let prev = h.tokens.last().copied().unwrap_or(sos);
            let out = model.step(&mut tape, prev, &h.state, &audio, &ctx, mask.as_deref())?;
            kernels::log_softmax(tape.value(out.logits).data(), &mut logp);
            alphas.push(if cfg.record_attention {
                out.alpha.map(|a| tape.value(a).data().to_vec())
            } else {
                None
            });
            next_states.push(out.state);
            for (tok, &lp) in logp.iter().enumerate() {
                if tok == sos {
                    continue;
                }
                let (fstate, inc) = match (fuse, &h.fusion) {
                    (Some(f), Some(s)) => {
                        if tok == eos {
                            (Some(s.clone()), f.finish(s))
                        } else if tok == bias_end {
                            (Some(s.clone()), 0.0)
                        } else {
                            let c = vocab.symbol(tok)?.chars().next().unwrap_or(' ');
                            let (ns, inc) = f.advance(s, c);
                            (Some(ns), inc)
                        }
                    }
                    _ => (None, 0.0),
                };
                let model_score = h.model_score + lp;
                let fusion_score = h.fusion_score + inc;
                let total = if fuse.is_some() {
                    model_score + cfg.lambda * fusion_score
                } else {
                    model_score
                };
                candidates.push(Candidate {
                    parent: pi,
                    token: tok,
                    model_score,
                    fusion_score,
                    total,
                    fusion: fstate,
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.total.total_cmp(&a.total).then_with(|| {
                let ta = candidate_tokens(&live, a);
                let tb = candidate_tokens(&live, b);
                ta.len().cmp(&tb.len()).then_with(|| ta.cmp(&tb))
            })
        });
        candidates.truncate(cfg.beam_width);

        let mut next_live = Vec::new();
        for c in candidates {
            let parent = &live[c.parent];
            let mut attention = parent.attention.clone();
            if let Some(a) = &alphas[c.parent] {
                attention.push(a.clone());
            }
            if c.token == eos {
                let h = Live {
                    tokens: parent.tokens.clone(),
                    text: String::new(),
                    model_score: c.model_score,
                    fusion_score: c.fusion_score,
                    state: next_states[c.parent].clone(),
                    fusion: c.fusion,
                    attention,
                };
                done.push(finish_hyp(model, h, c.total, true));
                continue;
            }
            let mut tokens = parent.tokens.clone();
            tokens.push(c.token);
            let mut text = parent.text.clone();
            if c.token != bias_end {
                text.push_str(vocab.symbol(c.token)?);
            }
            next_live.push(Live {
                tokens,
                text,
                model_score: c.model_score,
                fusion_score: c.fusion_score,
                state: next_states[c.parent].clone(),
                fusion: c.fusion,
                attention,
            });
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
        let best_done = done.iter().map(|h| h.total).fold(f64::NEG_INFINITY, f64::max);
        let best_live = live.iter().map(|h| h.model_score + cfg.lambda * h.fusion_score).fold(f64::NEG_INFINITY, f64::max);
        // Model increments are log-probabilities (never positive), so without
        // fusion no live hypothesis can overtake a finished one.
        let settled = best_done >= best_live && (fuse.is_none() || done.len() >= cfg.beam_width);
        if settled {
            break;
        }
    }

    let finished = !done.is_empty();
    let mut hyps = if finished {
        done
    } else {
        live.into_iter()
            .map(|h| {
                let total = if fuse.is_some() {
                    h.model_score + cfg.lambda * h.fusion_score
                } else {
                    h.model_score
                };
                finish_hyp(model, h, total, false)
            })
            .collect()
    };
    hyps.sort_by(|a, b| rank(a.total, &a.tokens, b.total, &b.tokens));
    hyps.truncate(cfg.n_best);
    Ok(DecodeOutput {
        hypotheses: hyps,
        finished,
    })
}
