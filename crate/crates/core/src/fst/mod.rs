//! Contextual biasing with weighted finite-state transducers: a word-level
//! phrase grammar `G`, a speller `S` from graphemes to words, their
//! composition, determinization and minimization, and the weight placement
//! used for incremental shallow-fusion scoring.
//!
//! Weights are kept exact during construction: they are rationals in units
//! of the per-word bonus, and are only converted to floating point (times
//! the bonus) in the final [`ContextFst`].

mod alphabet;
mod context;
mod grammar;
mod ops;
mod wfst;

pub use alphabet::{GraphemeAlphabet, OTHER, SPACE};
pub use context::{apply_strategy, compile_context, scoring_nfa, ContextFst, ContextState, WeightStrategy};
pub use grammar::{build_grammar, build_speller, Grammar};
pub use ops::{compose, compose_det_min, determinize, minimize, Determinized};
pub use wfst::{Arc, Label, StateId, Weight, Wfst, EPS};
