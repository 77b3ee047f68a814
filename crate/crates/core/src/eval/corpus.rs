//! Synthetic transcription task: random-letter lexicons, carrier templates,
//! and noisy one-hot "audio" frames stacked three at a time.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::Vocab;
use crate::tensor::Tensor;

const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

/// Raw frames stacked per encoder input frame; also the stride.
pub const STACK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SyntheticTaskConfig {
    /// Number of letters, taken from the start of `a..z`.
    pub alphabet_size: usize,
    pub lexicon_size: usize,
    /// Test-only words, disjoint from the training lexicon.
    pub oov_lexicon_size: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    pub min_utterance_words: usize,
    pub max_utterance_words: usize,
    pub min_frames_per_grapheme: usize,
    pub max_frames_per_grapheme: usize,
    pub noise_std: f64,
    /// Carrier templates; the phrase follows the carrier words.
    pub carriers: Vec<String>,
    /// Longest phrase, in words, placed after a carrier.
    pub max_phrase_words: usize,
}

impl Default for SyntheticTaskConfig {
    fn default() -> Self {
        SyntheticTaskConfig {
            alphabet_size: 26,
            lexicon_size: 400,
            oov_lexicon_size: 1500,
            min_word_len: 3,
            max_word_len: 6,
            min_utterance_words: 2,
            max_utterance_words: 4,
            min_frames_per_grapheme: 1,
            max_frames_per_grapheme: 3,
            noise_std: 0.5,
            carriers: ["play", "call", "talk to"].iter().map(|s| s.to_string()).collect(),
            max_phrase_words: 2,
        }
    }
}

impl SyntheticTaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.alphabet_size == 0 || self.alphabet_size > LETTERS.len() {
            return bad("alphabet_size must be in 1..=26");
        }
        if self.min_word_len == 0 || self.min_word_len > self.max_word_len {
            return bad("word length range is empty");
        }
        if self.min_utterance_words == 0 || self.min_utterance_words > self.max_utterance_words {
            return bad("utterance length range is empty");
        }
        if self.min_frames_per_grapheme == 0 || self.min_frames_per_grapheme > self.max_frames_per_grapheme {
            return bad("frames-per-grapheme range is empty");
        }
        if self.lexicon_size == 0 || self.max_phrase_words == 0 {
            return bad("lexicon_size and max_phrase_words must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be a non-negative number");
        }
        for c in &self.carriers {
            if c.split(' ').any(|w| w.is_empty()) {
                return Err(Error::Config(format!("carrier {c:?} is not single-spaced")));
            }
            if let Some(ch) = c.chars().find(|ch| *ch != ' ' && !LETTERS.contains(*ch)) {
                return Err(Error::UnknownGrapheme(ch));
            }
        }
        // Words are drawn until the lexicons are full; refuse sizes that would
        // exhaust the space of distinct strings.
        let mut space = 0f64;
        for len in self.min_word_len..=self.max_word_len {
            space += libm::pow(self.alphabet_size as f64, len as f64);
        }
        if ((self.lexicon_size + self.oov_lexicon_size) as f64) > space / 4.0 {
            return bad("lexicon sizes too large for the word length range");
        }
        Ok(())
    }

    /// Letters that lexicon words are drawn from.
    pub fn letters(&self) -> &'static str {
        &LETTERS[..self.alphabet_size]
    }

    /// Output graphemes: the word letters plus any letter used by a carrier.
    pub fn graphemes(&self) -> String {
        LETTERS
            .chars()
            .filter(|ch| self.letters().contains(*ch) || self.carriers.iter().any(|c| c.contains(*ch)))
            .collect()
    }
}

/// Raw frame width: one dimension per grapheme (space included) plus an
/// onset flag set on the first frame of each grapheme, so repeated letters
/// stay distinguishable.
pub fn raw_feature_dim(vocab: &Vocab) -> usize {
    vocab.graphemes().count() + 1
}

pub fn stacked_feature_dim(vocab: &Vocab) -> usize {
    STACK * raw_feature_dim(vocab)
}

/// Concatenates `STACK` consecutive frames with stride `STACK`, zero-padding
/// the tail: `K` frames of width `F` become `ceil(K / STACK)` frames of width
/// `STACK * F`.
pub fn stack_frames(raw: &[Vec<f64>], width: usize) -> Result<Tensor> {
    if raw.is_empty() {
        return Err(Error::Empty("feature frames"));
    }
    let out_frames = raw.len().div_ceil(STACK);
    let mut data = Vec::with_capacity(out_frames * STACK * width);
    for j in 0..out_frames {
        for s in 0..STACK {
            match raw.get(j * STACK + s) {
                Some(f) if f.len() == width => data.extend_from_slice(f),
                Some(f) => return Err(Error::DataLength {
                    shape: crate::tensor::Shape::Vector(width),
                    len: f.len(),
                }),
                None => data.extend(core::iter::repeat_n(0.0, width)),
            }
        }
    }
    Tensor::matrix(out_frames, STACK * width, data)
}

/// Renders a transcript as noisy frames: 1..=max frames per grapheme, each
/// a one-hot of the grapheme plus Gaussian noise.
pub fn render_features<R: Rng + ?Sized>(
    text: &str,
    vocab: &Vocab,
    cfg: &SyntheticTaskConfig,
    rng: &mut R,
) -> Result<Tensor> {
    let width = raw_feature_dim(vocab);
    let index: Vec<(char, usize)> = vocab.graphemes().enumerate().map(|(i, (_, c))| (c, i)).collect();
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|_| Error::Config("invalid noise_std".into()))?;
    let mut raw = Vec::new();
    for ch in text.chars() {
        let g = index
            .iter()
            .find(|(c, _)| *c == ch)
            .map(|(_, i)| *i)
            .ok_or(Error::UnknownGrapheme(ch))?;
        let n = rng.random_range(cfg.min_frames_per_grapheme..=cfg.max_frames_per_grapheme);
        for f in 0..n {
            let mut frame = alloc::vec![0.0; width];
            frame[g] = 1.0;
            if f == 0 {
                frame[width - 1] = 1.0;
            }
            if cfg.noise_std > 0.0 {
                for v in frame.iter_mut() {
                    *v += noise.sample(rng);
                }
            }
            raw.push(frame);
        }
    }
    stack_frames(&raw, width)
}

/// One utterance of a generated set. `bias_phrases` holds the phrases that
/// actually occur in the transcript; `bias_prefixes`, when present, pairs
/// each with its conditioning prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub transcript: String,
    pub features: Tensor,
    pub bias_phrases: Vec<String>,
    pub bias_prefixes: Option<Vec<String>>,
}

/// A lexicon-backed generator for the synthetic task.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    cfg: SyntheticTaskConfig,
    vocab: Vocab,
    lexicon: Vec<String>,
    oov: Vec<String>,
}

fn random_word<R: Rng + ?Sized>(letters: &[char], cfg: &SyntheticTaskConfig, rng: &mut R) -> String {
    let len = rng.random_range(cfg.min_word_len..=cfg.max_word_len);
    (0..len).map(|_| *letters.choose(rng).unwrap()).collect()
}

impl SyntheticTask {
    /// Draws the training and OOV lexicons. Carrier words are excluded from
    /// both so they cannot collide with phrase content.
    pub fn new<R: Rng + ?Sized>(cfg: SyntheticTaskConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let letters: Vec<char> = cfg.letters().chars().collect();
        let vocab = Vocab::from_graphemes(&cfg.graphemes())?;
        let reserved: Vec<&str> = cfg.carriers.iter().flat_map(|c| c.split(' ')).collect();
        let mut seen: Vec<String> = reserved.iter().map(|s| s.to_string()).collect();
        let mut draw = |n: usize, rng: &mut R| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let w = random_word(&letters, &cfg, rng);
                if !seen.contains(&w) {
                    seen.push(w.clone());
                    out.push(w);
                }
            }
            out
        };
        let lexicon = draw(cfg.lexicon_size, rng);
        let oov = draw(cfg.oov_lexicon_size, rng);
        Ok(SyntheticTask {
            cfg,
            vocab,
            lexicon,
            oov,
        })
    }

    pub fn config(&self) -> &SyntheticTaskConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn feature_dim(&self) -> usize {
        stacked_feature_dim(&self.vocab)
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }

    pub fn oov_lexicon(&self) -> &[String] {
        &self.oov
    }

    pub fn render<R: Rng + ?Sized>(&self, text: &str, rng: &mut R) -> Result<Tensor> {
        render_features(text, &self.vocab, &self.cfg, rng)
    }

    fn phrase_from<R: Rng + ?Sized>(&self, pool: &[String], max_words: usize, rng: &mut R) -> String {
        let n = rng.random_range(1..=max_words);
        let words: Vec<&str> = (0..n).map(|_| pool.choose(rng).unwrap().as_str()).collect();
        words.join(" ")
    }

    /// A training-style sentence over the training lexicon: half the time a
    /// carrier followed by a phrase, otherwise a free word sequence.
    pub fn sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> String {
        if !self.cfg.carriers.is_empty() && rng.random_bool(0.5) {
            let carrier = self.cfg.carriers.choose(rng).unwrap();
            let phrase = self.phrase_from(&self.lexicon, self.cfg.max_phrase_words, rng);
            format!("{carrier} {phrase}")
        } else {
            let n = rng.random_range(self.cfg.min_utterance_words..=self.cfg.max_utterance_words);
            let words: Vec<&str> = (0..n).map(|_| self.lexicon.choose(rng).unwrap().as_str()).collect();
            words.join(" ")
        }
    }

    fn utterance<R: Rng + ?Sized>(&self, id: String, transcript: String, phrases: Vec<String>, rng: &mut R) -> Result<Utterance> {
        let features = self.render(&transcript, rng)?;
        Ok(Utterance {
            id,
            transcript,
            features,
            bias_phrases: phrases,
            bias_prefixes: None,
        })
    }

    /// Training utterances over the training lexicon.
    pub fn training_set<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Utterance>> {
        (0..n)
            .map(|i| {
                let t = self.sentence(rng);
                self.utterance(format!("train-{i:05}"), t, Vec::new(), rng)
            })
            .collect()
    }

    /// Unbiased in-vocabulary test utterances.
    pub fn unbiased_set<R: Rng + ?Sized>(&self, prefix: &str, n: usize, rng: &mut R) -> Result<Vec<Utterance>> {
        (0..n)
            .map(|i| {
                let t = self.sentence(rng);
                self.utterance(format!("{prefix}-{i:05}"), t, Vec::new(), rng)
            })
            .collect()
    }

    /// Distinct phrases of OOV words, used both as true phrases and as the
    /// distractor pool.
    pub fn oov_phrases<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<String>> {
        if self.oov.is_empty() {
            return Err(Error::InsufficientPool {
                available: 0,
                required: n,
            });
        }
        let mut out: Vec<String> = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            if attempts > 100 * n + 1000 {
                return Err(Error::InsufficientPool {
                    available: out.len(),
                    required: n,
                });
            }
            let p = self.phrase_from(&self.oov, self.cfg.max_phrase_words, rng);
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Carrier + OOV phrase utterances. Each utterance's true phrase is taken
    /// from `phrases` in order (cycling), so the rest of `phrases` can serve
    /// as distractors.
    pub fn biased_set<R: Rng + ?Sized>(
        &self,
        prefix: &str,
        phrases: &[String],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Utterance>> {
        if phrases.is_empty() || self.cfg.carriers.is_empty() {
            return Err(Error::Empty("phrases or carriers"));
        }
        (0..n)
            .map(|i| {
                let phrase = &phrases[i % phrases.len()];
                let carrier = self.cfg.carriers.choose(rng).unwrap();
                let t = format!("{carrier} {phrase}");
                self.utterance(format!("{prefix}-{i:05}"), t, alloc::vec![phrase.clone()], rng)
            })
            .collect()
    }

    /// Contact-style phrases `trigger name...`: one OOV word in nine cases
    /// out of ten, two otherwise. Names are distinct.
    pub fn trigger_phrases<R: Rng + ?Sized>(&self, trigger: &str, n: usize, rng: &mut R) -> Result<Vec<String>> {
        if self.oov.len() < n {
            return Err(Error::InsufficientPool {
                available: self.oov.len(),
                required: n,
            });
        }
        let mut firsts: Vec<&String> = self.oov.iter().collect();
        firsts.shuffle(rng);
        Ok(firsts[..n]
            .iter()
            .map(|w| {
                if rng.random_bool(0.1) {
                    let second = self.oov.choose(rng).unwrap();
                    format!("{trigger} {w} {second}")
                } else {
                    format!("{trigger} {w}")
                }
            })
            .collect())
    }

    /// Utterances that each speak one of `phrases` verbatim.
    pub fn phrase_utterances<R: Rng + ?Sized>(
        &self,
        prefix: &str,
        phrases: &[String],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Utterance>> {
        if phrases.is_empty() {
            return Err(Error::Empty("phrases"));
        }
        (0..n)
            .map(|i| {
                let phrase = phrases.choose(rng).unwrap().clone();
                self.utterance(format!("{prefix}-{i:05}"), phrase.clone(), alloc::vec![phrase], rng)
            })
            .collect()
    }
}
