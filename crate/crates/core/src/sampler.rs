//! Training-time bias lists drawn from the references of a batch, and the
//! `</bias>` augmentation of training targets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::BIAS_END;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SamplerConfig {
    /// Probability that a reference contributes phrases.
    pub p_keep: f64,
    /// Upper bound on phrases drawn per kept reference.
    pub n_phrases: usize,
    /// Upper bound on words per phrase.
    pub n_order: usize,
    /// Probability that a whole batch gets an empty list, so the model
    /// also trains on the no-bias slot alone.
    pub p_empty: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            p_keep: 0.5,
            n_phrases: 1,
            n_order: 4,
            p_empty: 0.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_keep) {
            return Err(Error::Config(format!("p_keep {} is outside [0, 1]", self.p_keep)));
        }
        if !(0.0..=1.0).contains(&self.p_empty) {
            return Err(Error::Config(format!("p_empty {} is outside [0, 1]", self.p_empty)));
        }
        if self.n_phrases == 0 || self.n_order == 0 {
            return Err(Error::Config("n_phrases and n_order must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledBiasList {
    /// Phrases in first-drawn order, duplicates removed.
    pub phrases: Vec<String>,
    /// Number of phrases drawn before duplicates were removed.
    pub drawn: usize,
}

/// Draws a bias list from a batch of references. With probability
/// `p_empty` the list is empty. Otherwise each reference is kept
/// with probability `p_keep`; a kept reference contributes
/// `k ~ U{1..n_phrases}` word n-grams, each with its own
/// `n ~ U{1..n_order}` (clamped to the reference length) and a uniform
/// start position.
pub fn sample_bias_list<R: Rng + ?Sized>(
    references: &[&str],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SampledBiasList> {
    cfg.validate()?;
    let mut phrases: Vec<String> = Vec::new();
    let mut drawn = 0;
    // Only consult the generator when enabled, so p_empty = 0 leaves the
    // draw sequence unchanged.
    if cfg.p_empty > 0.0 && rng.random_bool(cfg.p_empty) {
        return Ok(SampledBiasList { phrases, drawn });
    }
    for reference in references {
        let words: Vec<&str> = reference.split(' ').filter(|w| !w.is_empty()).collect();
        if !rng.random_bool(cfg.p_keep) || words.is_empty() {
            continue;
        }
        let k = rng.random_range(1..=cfg.n_phrases);
        for _ in 0..k {
            let n = rng.random_range(1..=cfg.n_order).min(words.len());
            let start = rng.random_range(0..=words.len() - n);
            let phrase = words[start..start + n].join(" ");
            drawn += 1;
            if !phrases.contains(&phrase) {
                phrases.push(phrase);
            }
        }
    }
    Ok(SampledBiasList { phrases, drawn })
}

/// Marks phrase occurrences in `reference` by appending `</bias>` after each
/// match. Matching is word-aligned, leftmost, longest-first and
/// non-overlapping.
pub fn insert_bias_tokens(reference: &str, phrases: &[String]) -> String {
    let words: Vec<&str> = reference.split(' ').collect();
    let split: Vec<Vec<&str>> = phrases
        .iter()
        .map(|p| p.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>())
        .filter(|p| !p.is_empty())
        .collect();
    let mut out = String::with_capacity(reference.len() + 8);
    let mut i = 0;
    while i < words.len() {
        let best = split
            .iter()
            .filter(|p| words[i..].starts_with(p))
            .map(|p| p.len())
            .max();
        let n = best.unwrap_or(1);
        for (j, w) in words[i..i + n].iter().enumerate() {
            if i + j > 0 {
                out.push(' ');
            }
            out.push_str(w);
        }
        if best.is_some() {
            out.push_str(BIAS_END);
        }
        i += n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example() {
        let z = vec!["play".to_string()];
        assert_eq!(insert_bias_tokens("play a song.", &z), "play</bias> a song.");
        assert_eq!(insert_bias_tokens("play a song.", &[]), "play a song.");
    }

    #[test]
    fn longest_match_wins() {
        let z = vec!["b".to_string(), "a b".to_string()];
        assert_eq!(insert_bias_tokens("a b a b", &z), "a b</bias> a b</bias>");
    }

    #[test]
    fn keep_zero_gives_empty_list() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SamplerConfig {
            p_keep: 0.0,
            ..SamplerConfig::default()
        };
        let out = sample_bias_list(&["a b c", "d e"], &cfg, &mut rng).unwrap();
        assert!(out.phrases.is_empty());
        assert_eq!(out.drawn, 0);
    }

    #[test]
    fn empty_probability_one_always_empties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = SamplerConfig {
            p_keep: 1.0,
            p_empty: 1.0,
            ..SamplerConfig::default()
        };
        let out = sample_bias_list(&["a b c", "d e"], &cfg, &mut rng).unwrap();
        assert!(out.phrases.is_empty());
    }

    #[test]
    fn keep_one_unigram_per_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SamplerConfig {
            p_keep: 1.0,
            n_phrases: 1,
            n_order: 1,
            p_empty: 0.0,
        };
        let refs = ["a b c", "d e", "f"];
        let out = sample_bias_list(&refs, &cfg, &mut rng).unwrap();
        assert_eq!(out.drawn, 3);
        for (p, r) in out.phrases.iter().zip(refs) {
            assert!(!p.contains(' '));
            assert!(r.split(' ').any(|w| w == p));
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SamplerConfig {
            p_keep: 1.5,
            ..SamplerConfig::default()
        };
        assert!(sample_bias_list(&["a"], &cfg, &mut rng).is_err());
    }
}
