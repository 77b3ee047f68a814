//! Experiment specs for the `sweep` command: a TOML file listing
//! experiments over existing checkpoints and manifests. Each listed
//! experiment produces one report file.

use std::fs;
use std::path::{Path, PathBuf};

use clas_core::fst::WeightStrategy;
use clas_core::seed::substream_rng;
use serde::{Deserialize, Serialize};

use crate::battery::{
    attention_summary, conditioning_comparison, distractor_curve, embedding_report, embeddings, strategy_table,
};
use crate::checkpoint::load_model;
use crate::config::{ConditioningSection, RunConfig};
use crate::data::read_phrases;
use crate::error::{Error, Result};
use crate::manifest::read_manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistractorSpec {
    pub model: PathBuf,
    pub manifest: PathBuf,
    pub pool: PathBuf,
    #[serde(default = "default_counts")]
    pub counts: Vec<usize>,
}

fn default_counts() -> Vec<usize> {
    vec![0, 8, 32, 128, 256]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub model: PathBuf,
    pub manifest: PathBuf,
    /// Set used to pick lambda; defaults to `manifest`.
    #[serde(default)]
    pub tune_manifest: Option<PathBuf>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<WeightStrategy>,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub bonus: Option<f64>,
}

fn default_strategies() -> Vec<WeightStrategy> {
    WeightStrategy::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditioningSpec {
    pub model: PathBuf,
    pub manifest: PathBuf,
    /// Defaults to the run config's conditioning section.
    #[serde(default)]
    pub conditioning: Option<ConditioningSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionSpec {
    pub model: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub model: PathBuf,
    pub phrases: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub distractors: Vec<DistractorSpec>,
    pub strategies: Vec<StrategySpec>,
    pub conditioning: Vec<ConditioningSpec>,
    pub attention: Vec<AttentionSpec>,
    pub embeddings: Vec<EmbeddingSpec>,
}

impl SweepSpec {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(origin, e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(Error::io(path))?, path)
    }

    pub fn len(&self) -> usize {
        self.distractors.len() + self.strategies.len() + self.conditioning.len() + self.attention.len() + self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Runs every experiment in `spec` and writes `<kind>-<index>.tsv` files
/// plus the resolved config into `out`. Relative paths in the spec are
/// resolved against `base`. Returns the report file names in order.
pub fn run_sweep(spec: &SweepSpec, base: &Path, cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    cfg.save_into(out)?;
    let at = |p: &Path| base.join(p);
    let mut written = Vec::new();
    let mut emit = |name: String, body: String| -> Result<()> {
        let p = out.join(&name);
        fs::write(&p, body).map_err(Error::io(&p))?;
        written.push(name);
        Ok(())
    };
    for (i, s) in spec.distractors.iter().enumerate() {
        let model = load_model(&at(&s.model))?;
        let utts = read_manifest(&at(&s.manifest))?;
        let pool = read_phrases(&at(&s.pool))?;
        let mut rng = substream_rng(cfg.seed, &format!("sweep/distractors/{i}"));
        let curve = distractor_curve(&model, &utts, &pool, &s.counts, &cfg.decode, &mut rng)?;
        emit(format!("distractors-{i}.tsv"), curve.report())?;
    }
    for (i, s) in spec.strategies.iter().enumerate() {
        let model = load_model(&at(&s.model))?;
        let test = read_manifest(&at(&s.manifest))?;
        let tune = match &s.tune_manifest {
            Some(t) => read_manifest(&at(t))?,
            None => test.clone(),
        };
        let bonus = s.bonus.unwrap_or(cfg.fusion.bonus);
        let table = strategy_table(&model, &tune, &test, &s.strategies, &s.lambdas, bonus, &cfg.decode)?;
        emit(format!("strategies-{i}.tsv"), table.report())?;
    }
    for (i, s) in spec.conditioning.iter().enumerate() {
        let model = load_model(&at(&s.model))?;
        let utts = read_manifest(&at(&s.manifest))?;
        let c = s.conditioning.clone().unwrap_or_else(|| cfg.conditioning.clone());
        let cmp = conditioning_comparison(&model, &utts, &c, &cfg.decode)?;
        emit(format!("conditioning-{i}.tsv"), cmp.report())?;
    }
    for (i, s) in spec.attention.iter().enumerate() {
        let model = load_model(&at(&s.model))?;
        let utts = read_manifest(&at(&s.manifest))?;
        emit(format!("attention-{i}.tsv"), attention_summary(&model, &utts)?.report())?;
    }
    for (i, s) in spec.embeddings.iter().enumerate() {
        let model = load_model(&at(&s.model))?;
        let phrases = read_phrases(&at(&s.phrases))?;
        emit(format!("embeddings-{i}.tsv"), embedding_report(&embeddings(&model, &phrases)?))?;
    }
    Ok(written)
}
