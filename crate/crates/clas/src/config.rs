//! Run configuration: one TOML file covering the task, model, training,
//! decoding and biasing settings, plus `section.key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clas_core::decoder::DecodeConfig;
use clas_core::eval::SyntheticTaskConfig;
use clas_core::fst::WeightStrategy;
use clas_core::model::{ModelConfig, Vocab};
use clas_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming the config file used when none is given.
pub const CONFIG_ENV: &str = "CLAS_CONFIG";

/// File name of the resolved config written into every output directory.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub encoder_layers: usize,
    pub encoder_units: usize,
    pub decoder_layers: usize,
    pub decoder_units: usize,
    pub attention_dim: usize,
    pub attention_heads: usize,
    pub bias_encoder_units: usize,
    pub embedding_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::desk(1, Vocab::from_graphemes("a").unwrap());
        ModelSection {
            encoder_layers: d.encoder_layers,
            encoder_units: d.encoder_units,
            decoder_layers: d.decoder_layers,
            decoder_units: d.decoder_units,
            attention_dim: d.attention_dim,
            attention_heads: d.attention_heads,
            bias_encoder_units: d.bias_encoder_units,
            embedding_dim: d.embedding_dim,
        }
    }
}

impl ModelSection {
    pub fn build(&self, feature_dim: usize, vocab: Vocab) -> ModelConfig {
        ModelConfig {
            feature_dim,
            encoder_layers: self.encoder_layers,
            encoder_units: self.encoder_units,
            decoder_layers: self.decoder_layers,
            decoder_units: self.decoder_units,
            attention_dim: self.attention_dim,
            attention_heads: self.attention_heads,
            bias_encoder_units: self.bias_encoder_units,
            embedding_dim: self.embedding_dim,
            vocab,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub strategy: WeightStrategy,
    /// Score per matched word, before the decoder's `lambda`.
    pub bonus: f64,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            strategy: WeightStrategy::EverySubword,
            bonus: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditioningMode {
    #[default]
    Off,
    /// Prefixes taken from the manifest's `bias_prefixes`.
    Manifest,
    RuleBased,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningSection {
    pub mode: ConditioningMode,
    pub trigger: String,
    pub max_share: usize,
}

impl Default for ConditioningSection {
    fn default() -> Self {
        ConditioningSection {
            mode: ConditioningMode::Off,
            trigger: "talk to".into(),
            max_share: 8,
        }
    }
}

/// Sizes of the synthetic data sets written by `generate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_utterances: usize,
    pub test_utterances: usize,
    /// OOV phrases available as true phrases and distractors.
    pub bias_pool: usize,
    pub distractors: usize,
    /// Distinct `trigger name` phrases in the conditioning set.
    pub trigger_phrases: usize,
    pub trigger_utterances: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train_utterances: 6000,
            test_utterances: 200,
            bias_pool: 400,
            distractors: 32,
            trigger_phrases: 500,
            trigger_utterances: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub task: SyntheticTaskConfig,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub fusion: FusionSection,
    pub conditioning: ConditioningSection,
}

/// The task recipe the defaults are tuned for: a small alphabet, short
/// words, two to four frames per grapheme and moderate noise, which a desk
/// model learns in a few thousand steps on one CPU.
fn default_task() -> SyntheticTaskConfig {
    SyntheticTaskConfig {
        alphabet_size: 12,
        lexicon_size: 2000,
        max_word_len: 5,
        max_utterance_words: 3,
        min_frames_per_grapheme: 2,
        max_frames_per_grapheme: 4,
        noise_std: 0.3,
        ..SyntheticTaskConfig::default()
    }
}

fn default_train() -> TrainConfig {
    let mut t = TrainConfig {
        batch_size: 16,
        steps: 3000,
        ..TrainConfig::default()
    };
    t.adam.lr = 0.01;
    t.sampler.n_order = 2;
    t
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            task: default_task(),
            data: DataSection::default(),
            model: ModelSection::default(),
            train: default_train(),
            decode: DecodeConfig {
                beam_width: 4,
                max_len: 60,
                ..DecodeConfig::default()
            },
            fusion: FusionSection::default(),
            conditioning: ConditioningSection::default(),
        }
    }
}

/// Parses an override value as a TOML scalar or array, falling back to a
/// bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Recursively overlays `over` onto `base`; tables merge, other values
/// replace.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().unwrap();
    let mut table = root;
    for p in parents {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a section")))?;
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Parses TOML text and applies `overrides` on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let given: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        // Partial sections fill in from the recipe defaults, not from each
        // section type's own defaults.
        let mut table = toml::Table::try_from(RunConfig::default()).expect("config serializes");
        merge(&mut table, given);
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, or the file named by [`CONFIG_ENV`], or the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let path: Option<PathBuf> = path
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let text = match &path {
            Some(p) => fs::read_to_string(p).map_err(Error::io(p))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.train.sampler.validate()?;
        self.decode.validate()?;
        if !(self.fusion.bonus > 0.0 && self.fusion.bonus.is_finite()) {
            return Err(Error::Config("fusion.bonus must be a positive number".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved config into `dir`.
    pub fn save_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let p = dir.join(RESOLVED_CONFIG);
        fs::write(&p, self.to_toml()).map_err(Error::io(&p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::from_toml("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_recipe_defaults() {
        let cfg = RunConfig::from_toml("[train.sampler]\np_keep = 0.25\n", &["task.noise_std=0.1".into()]).unwrap();
        let d = RunConfig::default();
        assert_eq!(cfg.train.sampler.p_keep, 0.25);
        assert_eq!(cfg.train.steps, d.train.steps);
        assert_eq!(cfg.train.adam.lr, d.train.adam.lr);
        assert_eq!(cfg.task.noise_std, 0.1);
        assert_eq!(cfg.task.alphabet_size, d.task.alphabet_size);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::from_toml("seed = 9", &["decode.beam_width=3".into()]).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml(), &[]).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::from_toml("[train]\nstepz = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml("", &["fusion.bonus=-1".into()]).is_err());
        assert!(RunConfig::from_toml("", &["no_equals_sign".into()]).is_err());
    }
}
