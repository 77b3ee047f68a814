//! Synthetic corpus, WER scoring, and the experiment shapes used to compare
//! biasing methods.

pub mod corpus;
pub mod experiments;
pub mod wer;

pub use corpus::{SyntheticTask, SyntheticTaskConfig, Utterance};
pub use wer::{compute_wer, WerReport};
pub use experiments::{
    attention_at_markers, corpus_wer, decode_text, distractor_sweep, embedding_correlation, spearman, with_distractors,
    EmbeddingCorrelation, SweepPoint,
};
