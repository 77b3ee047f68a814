use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::alphabet::{GraphemeAlphabet, SPACE};
use super::wfst::{Label, StateId, Weight, Wfst, EPS};
use crate::error::{Error, Result};

/// Word-level phrase acceptor. Word `i` of [`Grammar::words`] has label
/// `i + 1`. Arc weights are in units of `bonus`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub fst: Wfst,
    pub words: Vec<String>,
    pub bonus: f64,
}

impl Grammar {
    pub fn word_label(&self, w: &str) -> Option<Label> {
        self.words.iter().position(|x| x == w).map(|i| i as Label + 1)
    }

    /// Best total weight of a word sequence, or `None` if it is rejected.
    pub fn path_weight(&self, words: &[&str]) -> Option<f64> {
        let labels: Option<Vec<Label>> = words.iter().map(|w| self.word_label(w)).collect();
        let w = self.fst.best_path(&labels?)?;
        Some(*w.numer() as f64 / *w.denom() as f64 * self.bonus)
    }
}

/// Splits and validates phrases: lower-case words separated by single
/// spaces after normalization.
pub(crate) fn phrase_words(phrases: &[String]) -> Result<Vec<Vec<String>>> {
    phrases
        .iter()
        .map(|p| {
            let words: Vec<String> = p.split_whitespace().map(|w| w.to_lowercase()).collect();
            if words.is_empty() {
                Err(Error::EmptyPhrase)
            } else {
                Ok(words)
            }
        })
        .collect()
}

/// Phrase grammar: a word trie whose phrase-final arcs return to the start,
/// so any sequence of phrases is accepted. Each word arc weighs one unit.
pub fn build_grammar(phrases: &[String], bonus: f64) -> Result<Grammar> {
    if !(bonus > 0.0 && bonus.is_finite()) {
        return Err(Error::Config("bonus must be a positive number".into()));
    }
    let split = phrase_words(phrases)?;
    let mut words: Vec<String> = Vec::new();
    for w in split.iter().flatten() {
        if !words.contains(w) {
            words.push(w.clone());
        }
    }
    let label = |w: &String| words.iter().position(|x| x == w).unwrap() as Label + 1;
    let mut fst = Wfst::new();
    let start = fst.add_state();
    fst.set_start(start);
    fst.set_final(start, Weight::from_integer(0));
    let mut children: BTreeMap<(StateId, Label), StateId> = BTreeMap::new();
    let mut finals: Vec<(StateId, Label)> = Vec::new();
    for phrase in &split {
        let mut s = start;
        for w in &phrase[..phrase.len() - 1] {
            let l = label(w);
            s = match children.get(&(s, l)) {
                Some(&n) => n,
                None => {
                    let n = fst.add_state();
                    fst.add_arc(s, l, l, Weight::from_integer(1), n);
                    children.insert((s, l), n);
                    n
                }
            };
        }
        let l = label(phrase.last().unwrap());
        if !finals.contains(&(s, l)) {
            finals.push((s, l));
            fst.add_arc(s, l, l, Weight::from_integer(1), start);
        }
    }
    Ok(Grammar { fst, words, bonus })
}

/// Speller: a letter trie (epsilon outputs, zero weights) whose word-final
/// states emit the word label on a space arc back to the root. Word `i` of
/// `words` has label `i + 1`.
pub fn build_speller(words: &[String], alphabet: &GraphemeAlphabet) -> Result<Wfst> {
    let mut fst = Wfst::new();
    let root = fst.add_state();
    fst.set_start(root);
    fst.set_final(root, Weight::from_integer(0));
    let mut children: BTreeMap<(StateId, Label), StateId> = BTreeMap::new();
    let zero = Weight::from_integer(0);
    for (i, w) in words.iter().enumerate() {
        if w.is_empty() || w.contains(' ') {
            return Err(Error::Config(alloc::format!("invalid word {w:?}")));
        }
        let mut s = root;
        for c in w.chars() {
            let l = alphabet.letter_label(c)?;
            s = match children.get(&(s, l)) {
                Some(&n) => n,
                None => {
                    let n = fst.add_state();
                    fst.add_arc(s, l, EPS, zero, n);
                    children.insert((s, l), n);
                    n
                }
            };
        }
        let wl = i as Label + 1;
        if !fst.arcs(s).iter().any(|a| a.input == SPACE && a.output == wl) {
            fst.add_arc(s, SPACE, wl, zero, root);
        }
    }
    Ok(fst)
}
