//! Training driver shared by the `train` command and the experiment
//! battery.

use clas_core::eval::Utterance;
use clas_core::model::{ClasModel, Vocab};
use clas_core::seed::substream;
use clas_core::train::{Example, StepStats, Trainer};
use clas_core::Error as CoreError;

use crate::config::RunConfig;
use crate::error::Result;

/// Which model family to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Bias lists sampled per batch as configured.
    Clas,
    /// Plain LAS: the keep probability is forced to zero, so the bias path
    /// only ever sees the no-bias slot.
    Las,
}

/// Trains a fresh model on `data`. Initialization and batch/bias sampling
/// draw from the `init` and `sampler` substreams of the run seed. A
/// non-finite loss aborts training.
pub fn train_model(
    cfg: &RunConfig,
    feature_dim: usize,
    vocab: Vocab,
    data: &[Utterance],
    family: Family,
    mut on_step: impl FnMut(&StepStats),
) -> Result<ClasModel> {
    let mut model = ClasModel::new(cfg.model.build(feature_dim, vocab), substream(cfg.seed, "init"))?;
    let mut tc = cfg.train;
    if family == Family::Las {
        tc.sampler.p_keep = 0.0;
    }
    let mut trainer = Trainer::new(&model, tc, substream(cfg.seed, "sampler"))?;
    let examples: Vec<Example<'_>> = data
        .iter()
        .map(|u| Example {
            features: &u.features,
            transcript: &u.transcript,
        })
        .collect();
    while trainer.steps_taken() < tc.steps {
        let s = trainer.step(&mut model, &examples)?;
        if !s.loss.is_finite() {
            return Err(CoreError::NonFinite("training loss").into());
        }
        on_step(&s);
    }
    Ok(model)
}

/// Loss log lines `step<TAB>loss`.
pub fn loss_line(s: &StepStats) -> String {
    format!("{}\t{:.6}\n", s.step, s.loss)
}
