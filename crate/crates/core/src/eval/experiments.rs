//! Measurements on trained models: corpus WER under a biasing setup,
//! distractor sweeps, bias-embedding similarity, and bias attention.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::corpus::Utterance;
use super::wer::{compute_wer, words, WerReport};
use crate::decoder::{beam_search, DecodeConfig, Fusion, PreparedBias};
use crate::error::{Error, Result};
use crate::model::{BiasContext, ClasModel, Token};
use crate::tensor::Tape;
use crate::train::target_tokens;

/// Best hypothesis text for one utterance.
pub fn decode_text<F: Fusion>(
    model: &ClasModel,
    utt: &Utterance,
    bias: &PreparedBias,
    fusion: Option<&F>,
    cfg: &DecodeConfig,
) -> Result<String> {
    Ok(beam_search(model, &utt.features, bias, fusion, cfg)?.best().text.clone())
}

/// Micro-averaged WER of `(hypothesis, reference)` pairs.
pub fn corpus_wer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<WerReport> {
    let mut total = WerReport::default();
    for (hyp, reference) in pairs {
        total.merge(&compute_wer(&words(hyp), &words(reference))?);
    }
    Ok(total)
}

/// `truth` followed by `n` distinct phrases drawn from `pool` without
/// `truth`, in random order.
pub fn with_distractors<R: Rng + ?Sized>(truth: &[String], pool: &[String], n: usize, rng: &mut R) -> Result<Vec<String>> {
    let candidates: Vec<&String> = pool.iter().filter(|p| !truth.contains(p)).collect();
    if candidates.len() < n {
        return Err(Error::InsufficientPool {
            available: candidates.len(),
            required: n,
        });
    }
    let mut out: Vec<String> = truth.to_vec();
    out.extend(candidates.choose_multiple(rng, n).map(|p| (*p).clone()));
    out.shuffle(rng);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub distractors: usize,
    pub report: WerReport,
}

/// WER of CLAS decoding as the number of distractors grows. Each
/// utterance's distractors are one random ordering of the pool, truncated
/// to each count, so lists are nested across the sweep.
pub fn distractor_sweep<R: Rng + ?Sized>(
    model: &ClasModel,
    utts: &[Utterance],
    pool: &[String],
    counts: &[usize],
    cfg: &DecodeConfig,
    rng: &mut R,
) -> Result<Vec<SweepPoint>> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let orders: Vec<Vec<String>> = utts
        .iter()
        .map(|u| with_distractors(&[], &pool.iter().filter(|p| !u.bias_phrases.contains(p)).cloned().collect::<Vec<_>>(), max, rng))
        .collect::<Result<_>>()?;
    counts
        .iter()
        .map(|&n| {
            let hyps: Vec<String> = utts
                .iter()
                .zip(&orders)
                .map(|(u, order)| {
                    let mut list = u.bias_phrases.clone();
                    list.extend(order[..n].iter().cloned());
                    let bias = PreparedBias::new(model, &list)?;
                    decode_text::<crate::decoder::NoFusion>(model, u, &bias, None, cfg)
                })
                .collect::<Result<_>>()?;
            let report = corpus_wer(hyps.iter().map(String::as_str).zip(utts.iter().map(|u| u.transcript.as_str())))?;
            Ok(SweepPoint { distractors: n, report })
        })
        .collect()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // Tied values share their average rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Config("spearman needs two equal-length series of at least 2 points".into()));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / libm::sqrt(vx * vy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorrelation {
    /// Cosine similarity between every pair of phrase embeddings.
    pub matrix: Vec<Vec<f64>>,
    pub mean_off_diagonal: f64,
    pub max_off_diagonal: f64,
}

/// Normalized inner products between the bias-encoder embeddings of
/// `phrases`.
pub fn embedding_correlation(model: &ClasModel, phrases: &[String]) -> Result<EmbeddingCorrelation> {
    if phrases.len() < 2 {
        return Err(Error::Config("embedding correlation needs at least 2 phrases".into()));
    }
    let tokens: Vec<Vec<Token>> = phrases.iter().map(|p| model.vocab().encode(p)).collect::<Result<_>>()?;
    let emb = model.embed_phrases(&tokens)?;
    let width = emb.cols();
    let rows: Vec<&[f64]> = (1..=phrases.len()).map(|i| &emb.data()[i * width..(i + 1) * width]).collect();
    let norms: Vec<f64> = rows.iter().map(|r| libm::sqrt(r.iter().map(|x| x * x).sum())).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm(i + 1));
    }
    let n = rows.len();
    let mut matrix = alloc::vec![alloc::vec![0.0; n]; n];
    let (mut sum, mut max) = (0.0, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| a * b).sum();
            matrix[i][j] = dot / (norms[i] * norms[j]);
            if i != j {
                sum += matrix[i][j];
                max = max.max(matrix[i][j]);
            }
        }
    }
    Ok(EmbeddingCorrelation {
        matrix,
        mean_off_diagonal: sum / (n * (n - 1)) as f64,
        max_off_diagonal: max,
    })
}

/// Teacher-forced bias attention at every `</bias>` target of an utterance:
/// for each marker, the probability on the slot of the phrase it closes.
/// `phrases` is the utterance's bias list; slot `i + 1` holds `phrases[i]`.
pub fn attention_at_markers(model: &ClasModel, utt: &Utterance, phrases: &[String]) -> Result<Vec<f64>> {
    let vocab = model.vocab();
    let target = target_tokens(model, &utt.transcript, phrases)?;
    let tokens: Vec<Vec<Token>> = phrases.iter().map(|p| vocab.encode(p)).collect::<Result<_>>()?;
    let mut tape = Tape::inference(model.params());
    let enc = model.encode_audio(&mut tape, &utt.features)?;
    let audio = model.audio_memory(&mut tape, &enc)?;
    let emb = model.embed_phrases(&tokens)?;
    let ctx = BiasContext::Phrases(model.bias_memory_from_values(&mut tape, &emb)?);
    let mut state = model.initial_state(&mut tape);
    let mut prev = vocab.sos();
    let mut out = Vec::new();
    let mut emitted: Vec<Token> = Vec::new();
    for &tok in &target {
        let step = model.step(&mut tape, prev, &state, &audio, &ctx, None)?;
        if tok == vocab.bias_end() {
            let text = vocab.decode(&emitted, true)?;
            let closed = phrases
                .iter()
                .enumerate()
                .filter(|(_, p)| text == **p || text.ends_with(&alloc::format!(" {p}")))
                .max_by_key(|(_, p)| p.len())
                .map(|(i, _)| i);
            if let (Some(i), Some(alpha)) = (closed, step.alpha) {
                out.push(tape.value(alpha).data()[i + 1]);
            }
        }
        emitted.push(tok);
        state = step.state;
        prev = tok;
    }
    Ok(out)
}
