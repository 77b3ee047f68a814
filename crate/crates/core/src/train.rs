//! Batch training: sample a bias list from the batch references, augment the
//! targets with `</bias>`, and take one Adam step on the mean loss.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{BiasContext, ClasModel, Token};
use crate::optim::{Adam, AdamConfig};
use crate::sampler::{insert_bias_tokens, sample_bias_list, SamplerConfig};
use crate::tensor::{Gradients, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            steps: 1000,
            adam: AdamConfig::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: usize,
    /// Mean per-utterance loss.
    pub loss: f64,
    pub grad_norm: f64,
    pub phrases: usize,
}

/// A training example: stacked features and a plain transcript.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a Tensor,
    pub transcript: &'a str,
}

/// Augmented target tokens, terminated by end-of-sequence.
pub fn target_tokens(model: &ClasModel, transcript: &str, phrases: &[alloc::string::String]) -> Result<Vec<Token>> {
    let augmented = insert_bias_tokens(transcript, phrases);
    let mut t = model.vocab().encode(&augmented)?;
    t.push(model.vocab().eos());
    Ok(t)
}

/// Loss and gradients for one batch; the bias list is embedded once and
/// shared by every utterance in it.
pub fn batch_gradients<R: Rng + ?Sized>(
    model: &ClasModel,
    batch: &[Example<'_>],
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<(f64, Gradients, usize)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let refs: Vec<&str> = batch.iter().map(|e| e.transcript).collect();
    let sampled = sample_bias_list(&refs, sampler, rng)?;
    let vocab = model.vocab();
    let phrase_tokens: Vec<Vec<Token>> = sampled
        .phrases
        .iter()
        .map(|p| vocab.encode(p))
        .collect::<Result<_>>()?;
    let mut tape = Tape::new(model.params());
    let emb = model.encode_bias(&mut tape, &phrase_tokens)?;
    let bias = BiasContext::Phrases(model.bias_memory(&mut tape, emb)?);
    let mut losses = Vec::with_capacity(batch.len());
    for ex in batch {
        let target = target_tokens(model, ex.transcript, &sampled.phrases)?;
        let enc = model.encode_audio(&mut tape, ex.features)?;
        let audio = model.audio_memory(&mut tape, &enc)?;
        losses.push(model.sequence_loss(&mut tape, &audio, &bias, &target)?);
    }
    let total = tape.add_scalars(&losses)?;
    let mean = tape.scale(total, 1.0 / batch.len() as f64);
    let loss = tape.value(mean).data()[0];
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    let mut grads = Gradients::zeros_like(model.params());
    tape.backward(mean, &mut grads)?;
    Ok((loss, grads, sampled.phrases.len()))
}

/// Shuffled-epoch minibatch trainer. Batch order and bias sampling use
/// separate generators derived from one seed.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    adam: Adam,
    order_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
}

impl Trainer {
    pub fn new(model: &ClasModel, cfg: TrainConfig, seed: u64) -> Result<Self> {
        cfg.sampler.validate()?;
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let mut root = ChaCha8Rng::seed_from_u64(seed);
        Ok(Trainer {
            cfg,
            adam: Adam::new(cfg.adam, model.params()),
            order_rng: ChaCha8Rng::seed_from_u64(root.random()),
            sampler_rng: ChaCha8Rng::seed_from_u64(root.random()),
            order: Vec::new(),
            cursor: 0,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.cfg.batch_size);
        while out.len() < self.cfg.batch_size.min(n) {
            if self.cursor >= self.order.len() {
                self.order = (0..n).collect();
                self.order.shuffle(&mut self.order_rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// One optimizer step on the next minibatch of `data`.
    pub fn step(&mut self, model: &mut ClasModel, data: &[Example<'_>]) -> Result<StepStats> {
        if data.is_empty() {
            return Err(Error::Empty("training data"));
        }
        let idx = self.next_batch(data.len());
        let batch: Vec<Example<'_>> = idx.iter().map(|&i| data[i]).collect();
        let (loss, mut grads, phrases) = batch_gradients(model, &batch, &self.cfg.sampler, &mut self.sampler_rng)?;
        let grad_norm = self.adam.step(model.params_mut(), &mut grads);
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            loss,
            grad_norm,
            phrases,
        })
    }

    /// Runs the configured number of steps, reporting each to `log`.
    pub fn run(
        &mut self,
        model: &mut ClasModel,
        data: &[Example<'_>],
        mut log: impl FnMut(&StepStats),
    ) -> Result<()> {
        while self.step < self.cfg.steps {
            let s = self.step(model, data)?;
            log(&s);
        }
        Ok(())
    }
}
