use alloc::format;

use super::Vocab;
use crate::error::{Error, Result};

/// Architecture hyperparameters. `feature_dim` is the width of the encoder
/// input frames after stacking.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub encoder_layers: usize,
    pub encoder_units: usize,
    pub decoder_layers: usize,
    pub decoder_units: usize,
    pub attention_dim: usize,
    pub attention_heads: usize,
    pub bias_encoder_units: usize,
    pub embedding_dim: usize,
    pub vocab: Vocab,
}

impl ModelConfig {
    /// Desk-scale defaults.
    pub fn desk(feature_dim: usize, vocab: Vocab) -> Self {
        ModelConfig {
            feature_dim,
            encoder_layers: 2,
            encoder_units: 64,
            decoder_layers: 2,
            decoder_units: 64,
            attention_dim: 64,
            attention_heads: 2,
            bias_encoder_units: 64,
            embedding_dim: 32,
            vocab,
        }
    }

    /// The full-size architecture: 10x256 encoder, 4x256 decoder, 4-head
    /// attention over 512 dimensions and a 512-unit bias encoder.
    pub fn full_scale(feature_dim: usize, vocab: Vocab) -> Self {
        ModelConfig {
            feature_dim,
            encoder_layers: 10,
            encoder_units: 256,
            decoder_layers: 4,
            decoder_units: 256,
            attention_dim: 512,
            attention_heads: 4,
            bias_encoder_units: 512,
            embedding_dim: 64,
            vocab,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("encoder_layers", self.encoder_layers),
            ("encoder_units", self.encoder_units),
            ("decoder_layers", self.decoder_layers),
            ("decoder_units", self.decoder_units),
            ("attention_dim", self.attention_dim),
            ("attention_heads", self.attention_heads),
            ("bias_encoder_units", self.bias_encoder_units),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.attention_dim % self.attention_heads != 0 {
            return Err(Error::Config(format!(
                "attention_dim {} is not divisible by attention_heads {}",
                self.attention_dim, self.attention_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.attention_dim / self.attention_heads
    }

    /// Width of the concatenated context `[c_x; c_z]`.
    pub fn context_dim(&self) -> usize {
        self.attention_dim + self.bias_encoder_units
    }
}
