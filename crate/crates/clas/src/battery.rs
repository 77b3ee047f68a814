//! The experiment battery: decoding setups, WER over a set, and the
//! distractor, strategy, conditioning, attention and embedding
//! measurements, each rendered as a tab-separated report.

use clas_core::conditioning::{split_greedy, split_rule_based, ConditionedEntry};
use clas_core::decoder::{beam_search, DecodeConfig, NoFusion, PreparedBias};
use clas_core::eval::{
    attention_at_markers, corpus_wer, distractor_sweep, embedding_correlation, spearman, EmbeddingCorrelation, SweepPoint,
    Utterance, WerReport,
};
use clas_core::fst::{compile_context, ContextFst, GraphemeAlphabet, WeightStrategy};
use clas_core::model::{ClasModel, Vocab};
use rand::Rng;

use crate::config::{ConditioningMode, ConditioningSection, FusionSection};
use crate::error::{Error, Result};

/// What the bias attention sees.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasSource {
    /// Empty lists: the CLAS-NB setting, or a plain LAS model.
    Empty,
    /// Each utterance's bias list, unconditioned.
    List,
    /// Each utterance's bias list, split into prefixes and suffixes.
    Conditioned(ConditioningSection),
}

/// A complete decoding setup. Fusion is active when `fusion` is set and
/// `decode.lambda` is positive; each utterance's bias list is compiled
/// into its own context.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub bias: BiasSource,
    pub fusion: Option<FusionSection>,
    pub decode: DecodeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub id: String,
    pub text: String,
    pub score: f64,
}

/// Grapheme alphabet of a model vocabulary, for compiling contexts.
pub fn alphabet_of(vocab: &Vocab) -> GraphemeAlphabet {
    GraphemeAlphabet::new(&vocab.graphemes().map(|(_, c)| c).collect::<String>())
}

/// Entries for a manifest's explicit prefixes: an empty prefix leaves the
/// phrase unconditioned, otherwise the prefix must be a word prefix of the
/// phrase (or the whole phrase).
pub fn manifest_entries(phrases: &[String], prefixes: &[String]) -> Result<Vec<ConditionedEntry>> {
    phrases
        .iter()
        .zip(prefixes)
        .map(|(p, pre)| {
            if pre.is_empty() {
                Ok(ConditionedEntry::unconditioned(p))
            } else if p == pre {
                Ok(ConditionedEntry::new(pre, ""))
            } else if let Some(rest) = p.strip_prefix(&format!("{pre} ")) {
                Ok(ConditionedEntry::new(pre, rest))
            } else {
                Err(Error::Config(format!("prefix {pre:?} is not a word prefix of {p:?}")))
            }
        })
        .collect()
}

pub fn conditioned_entries(utt: &Utterance, c: &ConditioningSection) -> Result<Option<Vec<ConditionedEntry>>> {
    Ok(match c.mode {
        ConditioningMode::Off => None,
        ConditioningMode::Manifest => {
            let prefixes = utt
                .bias_prefixes
                .as_ref()
                .ok_or_else(|| Error::Config(format!("utterance {} has no bias_prefixes", utt.id)))?;
            Some(manifest_entries(&utt.bias_phrases, prefixes)?)
        }
        ConditioningMode::RuleBased => Some(split_rule_based(&utt.bias_phrases, &c.trigger)?),
        ConditioningMode::Greedy => Some(split_greedy(&utt.bias_phrases, c.max_share)?),
    })
}

pub fn prepare_bias(model: &ClasModel, utt: &Utterance, source: &BiasSource) -> Result<PreparedBias> {
    Ok(match source {
        BiasSource::Empty => PreparedBias::empty(model)?,
        BiasSource::List => PreparedBias::new(model, &utt.bias_phrases)?,
        BiasSource::Conditioned(c) => match conditioned_entries(utt, c)? {
            Some(entries) => PreparedBias::conditioned(model, &entries)?,
            None => PreparedBias::new(model, &utt.bias_phrases)?,
        },
    })
}

/// Decodes every utterance under `setup`, in order.
pub fn decode_set(model: &ClasModel, utts: &[Utterance], setup: &Setup) -> Result<Vec<Decoded>> {
    let alphabet = alphabet_of(model.vocab());
    utts.iter()
        .map(|u| {
            let bias = prepare_bias(model, u, &setup.bias)?;
            let out = match setup.fusion.filter(|_| setup.decode.lambda > 0.0) {
                Some(f) => {
                    let ctx = compile_context(&u.bias_phrases, &alphabet, f.strategy, f.bonus)?;
                    beam_search(model, &u.features, &bias, Some(&ctx), &setup.decode)?
                }
                None => beam_search::<NoFusion>(model, &u.features, &bias, None, &setup.decode)?,
            };
            let best = out.best();
            Ok(Decoded {
                id: u.id.clone(),
                text: best.text.clone(),
                score: best.total,
            })
        })
        .collect()
}

/// Decodes every utterance with one shared compiled context; `decode.lambda`
/// weights its scores.
pub fn decode_set_with_context(
    model: &ClasModel,
    utts: &[Utterance],
    bias: &BiasSource,
    ctx: &ContextFst,
    decode: &DecodeConfig,
) -> Result<Vec<Decoded>> {
    utts.iter()
        .map(|u| {
            let prepared = prepare_bias(model, u, bias)?;
            let out = beam_search(model, &u.features, &prepared, Some(ctx), decode)?;
            let best = out.best();
            Ok(Decoded {
                id: u.id.clone(),
                text: best.text.clone(),
                score: best.total,
            })
        })
        .collect()
}

pub fn wer_of(utts: &[Utterance], hyps: &[Decoded]) -> Result<WerReport> {
    Ok(corpus_wer(
        hyps.iter().map(|h| h.text.as_str()).zip(utts.iter().map(|u| u.transcript.as_str())),
    )?)
}

pub fn evaluate(model: &ClasModel, utts: &[Utterance], setup: &Setup) -> Result<WerReport> {
    wer_of(utts, &decode_set(model, utts, setup)?)
}

/// Hypothesis file lines `id<TAB>text<TAB>score`.
pub fn hypothesis_lines(hyps: &[Decoded]) -> String {
    hyps.iter().map(|h| format!("{}\t{}\t{:.6}\n", h.id, h.text, h.score)).collect()
}

pub fn wer_header() -> &'static str {
    "substitutions\tdeletions\tinsertions\treference_words\twer"
}

pub fn wer_row(r: &WerReport) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{:.4}",
        r.substitutions,
        r.deletions,
        r.insertions,
        r.reference_words,
        r.wer()
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistractorCurve {
    pub points: Vec<SweepPoint>,
    pub spearman: f64,
}

/// Phrases of `utt`'s bias list that occur word-aligned in its transcript.
pub fn true_phrases(utt: &Utterance) -> Vec<String> {
    let t = format!(" {} ", utt.transcript);
    utt.bias_phrases
        .iter()
        .filter(|p| t.contains(&format!(" {p} ")))
        .cloned()
        .collect()
}

/// WER as distractors are added to each utterance's true phrases (the
/// listed phrases that occur in its transcript); distractors come from
/// `pool`.
pub fn distractor_curve<R: Rng + ?Sized>(
    model: &ClasModel,
    utts: &[Utterance],
    pool: &[String],
    counts: &[usize],
    decode: &DecodeConfig,
    rng: &mut R,
) -> Result<DistractorCurve> {
    let truth: Vec<Utterance> = utts
        .iter()
        .map(|u| Utterance {
            bias_phrases: true_phrases(u),
            ..u.clone()
        })
        .collect();
    let points = distractor_sweep(model, &truth, pool, counts, decode, rng)?;
    let xs: Vec<f64> = points.iter().map(|p| p.distractors as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.report.wer()).collect();
    let rho = if points.len() >= 2 { spearman(&xs, &ys)? } else { 0.0 };
    Ok(DistractorCurve { points, spearman: rho })
}

impl DistractorCurve {
    pub fn report(&self) -> String {
        let mut s = String::from("distractors\twer\n");
        for p in &self.points {
            s.push_str(&format!("{}\t{:.4}\n", p.distractors, p.report.wer()));
        }
        s.push_str(&format!("# spearman\t{:.4}\n", self.spearman));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub strategy: WeightStrategy,
    pub lambda: f64,
    pub tune_wer: f64,
    pub test: WerReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    /// No fusion.
    pub baseline: WerReport,
    pub rows: Vec<StrategyRow>,
}

impl StrategyTable {
    pub fn row(&self, s: WeightStrategy) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == s)
    }

    pub fn report(&self) -> String {
        let mut s = String::from("strategy\tlambda\ttune_wer\ttest_wer\n");
        s.push_str(&format!("none\t0\t-\t{:.4}\n", self.baseline.wer()));
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{:.4}\t{:.4}\n",
                r.strategy.name(),
                r.lambda,
                r.tune_wer,
                r.test.wer()
            ));
        }
        s
    }
}

/// Shallow fusion over a model decoded with empty bias lists. For each
/// strategy, `lambda` is picked on `tune` (lowest WER, smaller lambda on
/// ties) and the test WER is reported at that value.
pub fn strategy_table(
    model: &ClasModel,
    tune: &[Utterance],
    test: &[Utterance],
    strategies: &[WeightStrategy],
    lambdas: &[f64],
    bonus: f64,
    decode: &DecodeConfig,
) -> Result<StrategyTable> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let plain = Setup {
        bias: BiasSource::Empty,
        fusion: None,
        decode: DecodeConfig { lambda: 0.0, ..*decode },
    };
    let baseline = evaluate(model, test, &plain)?;
    let mut rows = Vec::new();
    for &strategy in strategies {
        let setup_at = |lambda: f64| Setup {
            bias: BiasSource::Empty,
            fusion: Some(FusionSection { strategy, bonus }),
            decode: DecodeConfig { lambda, ..*decode },
        };
        let mut best: Option<(f64, f64)> = None;
        for &lambda in lambdas {
            let w = evaluate(model, tune, &setup_at(lambda))?.wer();
            if best.is_none_or(|(_, bw)| w < bw) {
                best = Some((lambda, w));
            }
        }
        let (lambda, tune_wer) = best.unwrap();
        rows.push(StrategyRow {
            strategy,
            lambda,
            tune_wer,
            test: evaluate(model, test, &setup_at(lambda))?,
        });
    }
    Ok(StrategyTable { baseline, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningComparison {
    pub unconditioned: WerReport,
    pub conditioned: WerReport,
    /// Decoding with every prefix empty reproduced unconditioned decoding
    /// exactly (texts and scores).
    pub empty_prefixes_identical: bool,
}

impl ConditioningComparison {
    pub fn relative_reduction(&self) -> f64 {
        relative_reduction(self.unconditioned.wer(), self.conditioned.wer())
    }

    pub fn report(&self) -> String {
        format!(
            "setup\t{}\nunconditioned\t{}\nconditioned\t{}\n# relative_reduction\t{:.4}\n# empty_prefixes_identical\t{}\n",
            wer_header(),
            wer_row(&self.unconditioned),
            wer_row(&self.conditioned),
            self.relative_reduction(),
            self.empty_prefixes_identical
        )
    }
}

pub fn relative_reduction(before: f64, after: f64) -> f64 {
    if before == 0.0 {
        0.0
    } else {
        (before - after) / before
    }
}

/// CLAS with and without bias-conditioning on the same utterances and
/// lists, plus the all-empty-prefix identity check.
pub fn conditioning_comparison(
    model: &ClasModel,
    utts: &[Utterance],
    conditioning: &ConditioningSection,
    decode: &DecodeConfig,
) -> Result<ConditioningComparison> {
    let decode = DecodeConfig { lambda: 0.0, ..*decode };
    let plain = Setup {
        bias: BiasSource::List,
        fusion: None,
        decode,
    };
    let plain_hyps = decode_set(model, utts, &plain)?;
    let cond = Setup {
        bias: BiasSource::Conditioned(conditioning.clone()),
        fusion: None,
        decode,
    };
    let cond_hyps = decode_set(model, utts, &cond)?;
    let emptied: Vec<Utterance> = utts
        .iter()
        .map(|u| Utterance {
            bias_prefixes: Some(vec![String::new(); u.bias_phrases.len()]),
            ..u.clone()
        })
        .collect();
    let empty = Setup {
        bias: BiasSource::Conditioned(ConditioningSection {
            mode: ConditioningMode::Manifest,
            ..conditioning.clone()
        }),
        fusion: None,
        decode,
    };
    let empty_hyps = decode_set(model, &emptied, &empty)?;
    Ok(ConditioningComparison {
        unconditioned: wer_of(utts, &plain_hyps)?,
        conditioned: wer_of(utts, &cond_hyps)?,
        empty_prefixes_identical: empty_hyps == plain_hyps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSummary {
    /// True-phrase probability at each `</bias>` target, over all
    /// utterances.
    pub values: Vec<f64>,
}

impl AttentionSummary {
    pub fn fraction_above(&self, threshold: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v > threshold).count() as f64 / self.values.len() as f64
    }

    pub fn report(&self) -> String {
        let mut s = String::from("marker\tprobability\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{i}\t{v:.6}\n"));
        }
        s.push_str(&format!("# fraction_above_0.5\t{:.4}\n", self.fraction_above(0.5)));
        s
    }
}

/// Teacher-forced bias attention on the true phrase at every `</bias>`
/// step of every utterance, with each utterance's own bias list.
pub fn attention_summary(model: &ClasModel, utts: &[Utterance]) -> Result<AttentionSummary> {
    let mut values = Vec::new();
    for u in utts {
        values.extend(attention_at_markers(model, u, &u.bias_phrases)?);
    }
    Ok(AttentionSummary { values })
}

pub fn embedding_report(c: &EmbeddingCorrelation) -> String {
    format!(
        "statistic\tvalue\nmean_off_diagonal\t{:.6}\nmax_off_diagonal\t{:.6}\n",
        c.mean_off_diagonal, c.max_off_diagonal
    )
}

pub fn embeddings(model: &ClasModel, phrases: &[String]) -> Result<EmbeddingCorrelation> {
    Ok(embedding_correlation(model, phrases)?)
}
