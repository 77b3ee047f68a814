//! Synthetic corpus generation: every data set the experiments use, drawn
//! from the `corpus` substream of the run seed.

use std::fs;
use std::path::Path;

use clas_core::eval::{with_distractors, SyntheticTask, Utterance};
use clas_core::seed::substream_rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::manifest::write_manifest;

pub const TRAIN: &str = "train.jsonl";
pub const DEV: &str = "dev.jsonl";
pub const BIASED: &str = "biased.jsonl";
pub const TUNE: &str = "tune.jsonl";
pub const TRIGGER: &str = "trigger.jsonl";
pub const POOL: &str = "pool.txt";

#[derive(Debug, Clone)]
pub struct Corpus {
    pub task: SyntheticTask,
    pub train: Vec<Utterance>,
    /// Unbiased in-vocabulary test set.
    pub dev: Vec<Utterance>,
    /// Carrier + OOV phrase utterances; bias lists hold the true phrase and
    /// the configured number of distractors.
    pub biased: Vec<Utterance>,
    /// Same construction as `biased`, disjoint utterances, for tuning
    /// fusion weights.
    pub tune: Vec<Utterance>,
    /// OOV phrases serving as true phrases and distractors.
    pub pool: Vec<String>,
    /// Utterances speaking one trigger phrase each; every bias list is the
    /// full trigger phrase set.
    pub trigger: Vec<Utterance>,
}

impl Corpus {
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let d = &cfg.data;
        let mut rng = substream_rng(cfg.seed, "corpus");
        let task = SyntheticTask::new(cfg.task.clone(), &mut rng)?;
        let train = task.training_set(d.train_utterances, &mut rng)?;
        let dev = task.unbiased_set("dev", d.test_utterances, &mut rng)?;
        let pool = task.oov_phrases(d.bias_pool, &mut rng)?;
        let mut biased = task.biased_set("biased", &pool, d.test_utterances, &mut rng)?;
        let mut tune = task.biased_set("tune", &pool[pool.len() / 2..], d.test_utterances / 2, &mut rng)?;
        for u in biased.iter_mut().chain(tune.iter_mut()) {
            u.bias_phrases = with_distractors(&u.bias_phrases, &pool, d.distractors, &mut rng)?;
        }
        let trigger_phrases = task.trigger_phrases(&cfg.conditioning.trigger, d.trigger_phrases, &mut rng)?;
        let mut trigger = task.phrase_utterances("trigger", &trigger_phrases, d.trigger_utterances, &mut rng)?;
        for u in &mut trigger {
            u.bias_phrases = trigger_phrases.clone();
        }
        Ok(Corpus {
            task,
            train,
            dev,
            biased,
            tune,
            pool,
            trigger,
        })
    }

    /// Writes every set as a manifest plus the phrase pool into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        write_manifest(&dir.join(TRAIN), &self.train)?;
        write_manifest(&dir.join(DEV), &self.dev)?;
        write_manifest(&dir.join(BIASED), &self.biased)?;
        write_manifest(&dir.join(TUNE), &self.tune)?;
        write_manifest(&dir.join(TRIGGER), &self.trigger)?;
        let pool = dir.join(POOL);
        fs::write(&pool, self.pool.iter().map(|p| format!("{p}\n")).collect::<String>()).map_err(Error::io(&pool))
    }
}

/// One phrase per non-blank line, whitespace collapsed.
pub fn read_phrases(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect())
}
