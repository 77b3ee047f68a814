use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::alphabet::{GraphemeAlphabet, SPACE};
use super::grammar::{build_grammar, build_speller};
use super::ops::{compose, determinize, minimize, Determinized};
use super::wfst::{Label, StateId, Weight, Wfst, EPS};
use crate::decoder::Fusion;
use crate::error::{Error, Result};

/// Where a word's bonus is placed along its graphemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WeightStrategy {
    /// Whole bonus on the word-final (space) arc.
    EndOfWord,
    /// Whole bonus on the word's first grapheme.
    BeginningOfWord,
    /// Bonus spread evenly over the word's graphemes; abandoning a partial
    /// match takes back what it earned on the arc where the match fails.
    EverySubword,
}

impl WeightStrategy {
    pub const ALL: [WeightStrategy; 3] = [
        WeightStrategy::EndOfWord,
        WeightStrategy::BeginningOfWord,
        WeightStrategy::EverySubword,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WeightStrategy::EndOfWord => "end-of-word",
            WeightStrategy::BeginningOfWord => "beginning-of-word",
            WeightStrategy::EverySubword => "every-subword",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        WeightStrategy::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown strategy {s:?}")))
    }
}

/// `S ∘ G` extended so that matching can start at any word: from the start
/// state, any word may instead be skipped through a dedicated skip state.
#[derive(Debug, Clone)]
pub struct ScoringNfa {
    pub fst: Wfst,
    pub words: Vec<String>,
    pub skip: StateId,
    /// Letters read since the last word boundary, per state.
    depth: Vec<usize>,
    /// Fewest further letters before a word can end, per state.
    to_space: Vec<usize>,
}

pub fn scoring_nfa(phrases: &[String], alphabet: &GraphemeAlphabet) -> Result<ScoringNfa> {
    let g = build_grammar(phrases, 1.0)?;
    let s = build_speller(&g.words, alphabet)?;
    let mut fst = compose(&s, &g.fst);
    let start = fst.start();
    let skip = fst.add_state();
    let zero = Weight::from_integer(0);
    for l in alphabet.word_labels() {
        fst.add_arc(start, l, EPS, zero, skip);
        fst.add_arc(skip, l, EPS, zero, skip);
    }
    fst.add_arc(start, SPACE, EPS, zero, start);
    fst.add_arc(skip, SPACE, EPS, zero, start);

    let n = fst.num_states();
    let mut depth = vec![usize::MAX; n];
    depth[start] = 0;
    depth[skip] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(q) = queue.pop_front() {
        for a in fst.arcs(q) {
            if a.next == skip || depth[a.next] != usize::MAX {
                continue;
            }
            depth[a.next] = if a.input == SPACE { 0 } else { depth[q] + 1 };
            queue.push_back(a.next);
        }
    }
    let mut to_space = vec![usize::MAX; n];
    let mut changed = true;
    while changed {
        changed = false;
        for q in 0..n {
            let mut best = to_space[q];
            for a in fst.arcs(q) {
                let d = if a.input == SPACE {
                    0
                } else {
                    to_space[a.next].saturating_add(1)
                };
                best = best.min(d);
            }
            if best < to_space[q] {
                to_space[q] = best;
                changed = true;
            }
        }
    }
    Ok(ScoringNfa {
        fst,
        words: g.words,
        skip,
        depth,
        to_space,
    })
}

impl ScoringNfa {
    /// Bonus units already credited to a partial word at `state`.
    fn intra(&self, state: StateId, strategy: WeightStrategy) -> Weight {
        let k = self.depth[state];
        if state == self.skip || k == 0 {
            return Weight::from_integer(0);
        }
        match strategy {
            WeightStrategy::EndOfWord => Weight::from_integer(0),
            WeightStrategy::BeginningOfWord => Weight::from_integer(1),
            WeightStrategy::EverySubword => Weight::new(k as i64, (k + self.to_space[state]) as i64),
        }
    }
}

/// Re-places the weights of the determinized scoring automaton.
///
/// Each state is credited a potential: the best residual plus what the
/// strategy has already paid out for the partial word. Arc weights become
/// the determinized weight plus the change in potential, so totals at word
/// boundaries are unchanged. Under `EndOfWord` and `BeginningOfWord`,
/// negative corrections inside a word are held back and settled on the
/// next space; `EverySubword` pays them immediately. Final weights are the
/// increment of a closing space, and the result is minimized.
pub fn apply_strategy(nfa: &ScoringNfa, det: &Determinized, strategy: WeightStrategy) -> Result<Wfst> {
    let pot: Vec<Weight> = det
        .subsets
        .iter()
        .map(|sub| sub.iter().map(|(n, r)| *r + nfa.intra(*n, strategy)).max().unwrap())
        .collect();
    let boundary: Vec<bool> = det
        .subsets
        .iter()
        .map(|sub| !sub.iter().any(|(n, _)| *n == nfa.skip))
        .collect();
    let zero = Weight::from_integer(0);
    let mut out = Wfst::new();
    let mut ids: BTreeMap<(StateId, Weight), StateId> = BTreeMap::new();
    let mut queue = VecDeque::new();
    let start = (det.fst.start(), zero);
    let s0 = out.add_state();
    out.set_start(s0);
    ids.insert(start, s0);
    queue.push_back(start);
    while let Some((d, excess)) = queue.pop_front() {
        let src = ids[&(d, excess)];
        if boundary[d] {
            out.set_final(src, zero);
        }
        for a in det.fst.arcs(d) {
            let delta = a.weight + pot[a.next] - pot[d];
            let (w, e) = if a.input == SPACE {
                (delta - excess, zero)
            } else if strategy == WeightStrategy::EverySubword || delta >= zero {
                (delta, excess)
            } else {
                (zero, excess - delta)
            };
            if a.input == SPACE && !boundary[d] {
                out.set_final(src, w);
            }
            let key = (a.next, e);
            let dst = match ids.get(&key) {
                Some(&x) => x,
                None => {
                    let x = out.add_state();
                    ids.insert(key, x);
                    queue.push_back(key);
                    x
                }
            };
            out.add_arc(src, a.input, a.output, w, dst);
        }
    }
    Ok(minimize(&out))
}

/// Position of a hypothesis in a [`ContextFst`], plus the score collected
/// since the last word boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextState {
    pub state: u32,
    pub pending: f64,
}

/// Compiled contextual scorer: a complete deterministic automaton over
/// grapheme labels with real-valued weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextFst {
    alphabet: GraphemeAlphabet,
    strategy: WeightStrategy,
    bonus: f64,
    words: Vec<String>,
    start: u32,
    finals: Vec<f64>,
    /// `(next, weight, output)` indexed by `state * labels + label - 1`.
    table: Vec<(u32, f64, Label)>,
}

fn to_f64(w: Weight, bonus: f64) -> f64 {
    *w.numer() as f64 * bonus / *w.denom() as f64
}

impl ContextFst {
    /// Builds from a unit-weight automaton; weights are scaled by `bonus`.
    pub fn from_wfst(
        fst: &Wfst,
        alphabet: GraphemeAlphabet,
        strategy: WeightStrategy,
        bonus: f64,
        words: Vec<String>,
    ) -> Result<Self> {
        let mut arcs = Vec::with_capacity(fst.num_arcs());
        let mut finals = Vec::with_capacity(fst.num_states());
        for s in 0..fst.num_states() {
            let f = fst.final_weight(s).ok_or(Error::Config("non-final state in scorer".into()))?;
            finals.push(to_f64(f, bonus));
            for a in fst.arcs(s) {
                arcs.push((s as u32, a.input, a.output, to_f64(a.weight, bonus), a.next as u32));
            }
        }
        ContextFst::from_parts(alphabet, strategy, bonus, words, fst.start() as u32, finals, &arcs)
    }

    /// Assembles and validates a scorer from its serialized pieces. Every
    /// state needs exactly one arc per label.
    pub fn from_parts(
        alphabet: GraphemeAlphabet,
        strategy: WeightStrategy,
        bonus: f64,
        words: Vec<String>,
        start: u32,
        finals: Vec<f64>,
        arcs: &[(u32, Label, Label, f64, u32)],
    ) -> Result<Self> {
        let n = finals.len();
        let l = alphabet.num_labels();
        if n == 0 || start as usize >= n {
            return Err(Error::Config("scorer start state out of range".into()));
        }
        let mut table = vec![(u32::MAX, 0.0, EPS); n * l];
        for &(src, input, output, w, dst) in arcs {
            if src as usize >= n || dst as usize >= n || input == EPS || input as usize > l {
                return Err(Error::Config(alloc::format!("invalid arc {src} {input} {dst}")));
            }
            if output as usize > words.len() {
                return Err(Error::Config(alloc::format!("unknown output label {output}")));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite("arc weight"));
            }
            let slot = &mut table[src as usize * l + input as usize - 1];
            if slot.0 != u32::MAX {
                return Err(Error::Config(alloc::format!("state {src} is not deterministic")));
            }
            *slot = (dst, w, output);
        }
        if table.iter().any(|t| t.0 == u32::MAX) {
            return Err(Error::Config("scorer is not complete over its alphabet".into()));
        }
        if finals.iter().any(|f| !f.is_finite()) {
            return Err(Error::NonFinite("final weight"));
        }
        Ok(ContextFst {
            alphabet,
            strategy,
            bonus,
            words,
            start,
            finals,
            table,
        })
    }

    pub fn alphabet(&self) -> &GraphemeAlphabet {
        &self.alphabet
    }

    pub fn strategy(&self) -> WeightStrategy {
        self.strategy
    }

    pub fn bonus(&self) -> f64 {
        self.bonus
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn start_state(&self) -> u32 {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.finals.len()
    }

    pub fn final_weight(&self, state: u32) -> f64 {
        self.finals[state as usize]
    }

    /// `(next, weight, output)` for `label` out of `state`.
    pub fn transition(&self, state: u32, label: Label) -> (u32, f64, Label) {
        self.table[state as usize * self.alphabet.num_labels() + label as usize - 1]
    }

    /// All arcs as `(src, input, output, weight, dst)` in state/label order.
    pub fn arcs(&self) -> impl Iterator<Item = (u32, Label, Label, f64, u32)> + '_ {
        let l = self.alphabet.num_labels();
        self.table
            .iter()
            .enumerate()
            .map(move |(i, t)| ((i / l) as u32, (i % l) as Label + 1, t.2, t.1, t.0))
    }

    pub fn score_step(&self, s: ContextState, grapheme: char) -> (ContextState, f64) {
        let label = self.alphabet.label(grapheme);
        let (next, w, _) = self.transition(s.state, label);
        let pending = if label == SPACE { 0.0 } else { s.pending + w };
        (ContextState { state: next, pending }, w)
    }

    /// Cumulative score of a whole text, closing the last word.
    pub fn score_text(&self, text: &str) -> f64 {
        let mut s = self.start();
        let mut total = 0.0;
        for c in text.chars() {
            let (n, w) = self.score_step(s, c);
            s = n;
            total += w;
        }
        total + self.final_weight(s.state)
    }

    pub fn start(&self) -> ContextState {
        ContextState {
            state: self.start,
            pending: 0.0,
        }
    }
}

impl Fusion for ContextFst {
    type State = ContextState;

    fn start(&self) -> ContextState {
        ContextFst::start(self)
    }

    fn advance(&self, state: &ContextState, grapheme: char) -> (ContextState, f64) {
        self.score_step(*state, grapheme)
    }

    fn finish(&self, state: &ContextState) -> f64 {
        self.final_weight(state.state)
    }
}

/// Full pipeline: grammar, speller, composition with skip paths,
/// determinization, weight placement, minimization.
pub fn compile_context(
    phrases: &[String],
    alphabet: &GraphemeAlphabet,
    strategy: WeightStrategy,
    bonus: f64,
) -> Result<ContextFst> {
    if !(bonus > 0.0 && bonus.is_finite()) {
        return Err(Error::Config("bonus must be a positive number".into()));
    }
    let nfa = scoring_nfa(phrases, alphabet)?;
    let det = determinize(&nfa.fst)?;
    let placed = apply_strategy(&nfa, &det, strategy)?;
    ContextFst::from_wfst(&placed, alphabet.clone(), strategy, bonus, nfa.words.clone())
}
