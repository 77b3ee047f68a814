use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use super::wfst::{Label, StateId, Weight, Wfst, EPS};
use crate::error::{Error, Result};

/// Upper bound on determinized states, as a guard against automata that are
/// not determinizable.
const MAX_DET_STATES: usize = 2_000_000;

/// Composition `a ∘ b`: `a`'s outputs are matched against `b`'s inputs.
/// Epsilon outputs of `a` (and epsilon inputs of `b`) advance one side
/// alone. The result is trimmed.
pub fn compose(a: &Wfst, b: &Wfst) -> Wfst {
    let mut out = Wfst::new();
    if a.num_states() == 0 || b.num_states() == 0 {
        return out;
    }
    let mut ids: BTreeMap<(StateId, StateId), StateId> = BTreeMap::new();
    let mut queue = VecDeque::new();
    let s0 = out.add_state();
    out.set_start(s0);
    ids.insert((a.start(), b.start()), s0);
    queue.push_back((a.start(), b.start()));
    let mut get = |out: &mut Wfst, queue: &mut VecDeque<_>, key: (StateId, StateId)| -> StateId {
        *ids.entry(key).or_insert_with(|| {
            queue.push_back(key);
            out.add_state()
        })
    };
    while let Some((sa, sb)) = queue.pop_front() {
        let src = get(&mut out, &mut queue, (sa, sb));
        if let (Some(fa), Some(fb)) = (a.final_weight(sa), b.final_weight(sb)) {
            out.set_final(src, fa + fb);
        }
        for x in a.arcs(sa) {
            if x.output == EPS {
                let dst = get(&mut out, &mut queue, (x.next, sb));
                out.add_arc(src, x.input, EPS, x.weight, dst);
                continue;
            }
            for y in b.arcs(sb).iter().filter(|y| y.input == x.output) {
                let dst = get(&mut out, &mut queue, (x.next, y.next));
                out.add_arc(src, x.input, y.output, x.weight + y.weight, dst);
            }
        }
        for y in b.arcs(sb).iter().filter(|y| y.input == EPS) {
            let dst = get(&mut out, &mut queue, (sa, y.next));
            out.add_arc(src, EPS, y.output, y.weight, dst);
        }
    }
    out.trim()
}

/// A determinized automaton with, for each state, the subset of source
/// states it stands for and their residual weights (each subset has
/// maximum residual zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Determinized {
    pub fst: Wfst,
    pub subsets: Vec<Vec<(StateId, Weight)>>,
}

/// Weighted subset construction in the (max, +) semiring. The arc weight is
/// the best continuation weight; residuals carry the rest. Output labels
/// follow the best path (smallest label on ties). The input must be free
/// of epsilon inputs.
pub fn determinize(nfa: &Wfst) -> Result<Determinized> {
    if (0..nfa.num_states()).any(|s| nfa.arcs(s).iter().any(|a| a.input == EPS)) {
        return Err(Error::Config("determinize requires epsilon-free inputs".into()));
    }
    let mut fst = Wfst::new();
    let mut subsets: Vec<Vec<(StateId, Weight)>> = Vec::new();
    if nfa.num_states() == 0 {
        return Ok(Determinized { fst, subsets });
    }
    let mut ids: BTreeMap<Vec<(StateId, Weight)>, StateId> = BTreeMap::new();
    let start = vec![(nfa.start(), Weight::from_integer(0))];
    let s0 = fst.add_state();
    fst.set_start(s0);
    ids.insert(start.clone(), s0);
    subsets.push(start);
    let mut next_unprocessed = 0;
    while next_unprocessed < subsets.len() {
        let id = next_unprocessed;
        next_unprocessed += 1;
        let subset = subsets[id].clone();
        let final_w = subset
            .iter()
            .filter_map(|(n, r)| Some(*r + nfa.final_weight(*n)?))
            .max();
        if let Some(w) = final_w {
            fst.set_final(id, w);
        }
        // label -> target -> (best value, output of best)
        let mut moves: BTreeMap<Label, BTreeMap<StateId, (Weight, Label)>> = BTreeMap::new();
        for (n, r) in &subset {
            for a in nfa.arcs(*n) {
                let v = *r + a.weight;
                let e = moves.entry(a.input).or_default().entry(a.next).or_insert((v, a.output));
                if v > e.0 || (v == e.0 && a.output < e.1) {
                    *e = (v, a.output);
                }
            }
        }
        for (label, targets) in moves {
            let best = targets.values().map(|(v, _)| *v).max().unwrap();
            let output = targets
                .values()
                .filter(|(v, _)| *v == best)
                .map(|(_, o)| *o)
                .min()
                .unwrap();
            let next: Vec<(StateId, Weight)> = targets.iter().map(|(s, (v, _))| (*s, *v - best)).collect();
            let dst = match ids.get(&next) {
                Some(&d) => d,
                None => {
                    if subsets.len() >= MAX_DET_STATES {
                        return Err(Error::Config("determinization did not terminate".into()));
                    }
                    let d = fst.add_state();
                    ids.insert(next.clone(), d);
                    subsets.push(next);
                    d
                }
            };
            fst.add_arc(id, label, output, best, dst);
        }
    }
    Ok(Determinized { fst, subsets })
}

/// Moore-style partition refinement of a deterministic automaton: states
/// merge when they agree on final weight and on every arc's labels, weight
/// and target class. States are renumbered breadth-first from the start.
pub fn minimize(dfa: &Wfst) -> Wfst {
    let (classes, _) = partition(dfa, &vec![0; dfa.num_states()]);
    quotient(dfa, &classes)
}

/// Refines `initial` (a class per state) to the coarsest stable partition.
pub(crate) fn partition(dfa: &Wfst, initial: &[usize]) -> (Vec<usize>, usize) {
    let n = dfa.num_states();
    let mut class: Vec<usize> = initial.to_vec();
    let mut count = usize::MAX;
    loop {
        let mut sigs: BTreeMap<(usize, Option<Weight>, Vec<(Label, Label, Weight, usize)>), usize> = BTreeMap::new();
        let mut next = vec![0; n];
        for s in 0..n {
            let mut arcs: Vec<(Label, Label, Weight, usize)> = dfa
                .arcs(s)
                .iter()
                .map(|a| (a.input, a.output, a.weight, class[a.next]))
                .collect();
            arcs.sort();
            let key = (class[s], dfa.final_weight(s), arcs);
            let k = sigs.len();
            next[s] = *sigs.entry(key).or_insert(k);
        }
        let new_count = sigs.len();
        class = next;
        if new_count == count {
            return (class, count);
        }
        count = new_count;
    }
}

/// Merges states by class, numbering classes breadth-first from the start.
pub(crate) fn quotient(dfa: &Wfst, class: &[usize]) -> Wfst {
    let mut out = Wfst::new();
    if dfa.num_states() == 0 {
        return out;
    }
    let mut rep: BTreeMap<usize, StateId> = BTreeMap::new();
    let mut id_of: BTreeMap<usize, StateId> = BTreeMap::new();
    for s in 0..dfa.num_states() {
        rep.entry(class[s]).or_insert(s);
    }
    let mut queue = VecDeque::new();
    let s0 = out.add_state();
    out.set_start(s0);
    id_of.insert(class[dfa.start()], s0);
    queue.push_back(class[dfa.start()]);
    while let Some(c) = queue.pop_front() {
        let s = rep[&c];
        let src = id_of[&c];
        if let Some(w) = dfa.final_weight(s) {
            out.set_final(src, w);
        }
        for a in dfa.arcs(s) {
            let tc = class[a.next];
            let dst = match id_of.get(&tc) {
                Some(&d) => d,
                None => {
                    let d = out.add_state();
                    id_of.insert(tc, d);
                    queue.push_back(tc);
                    d
                }
            };
            out.add_arc(src, a.input, a.output, a.weight, dst);
        }
    }
    out
}

/// `min(det(S ∘ G))`. Fails when no phrase of `g` can be spelled by `s`.
pub fn compose_det_min(s: &Wfst, g: &Wfst) -> Result<Wfst> {
    let c = compose(s, g);
    if c.num_arcs() == 0 {
        return Err(Error::EmptyComposition);
    }
    Ok(minimize(&determinize(&c)?.fst))
}
