use alloc::vec::Vec;

use num_rational::Ratio;

pub type StateId = usize;
pub type Label = u32;
/// Exact weight in units of the per-word bonus.
pub type Weight = Ratio<i64>;

/// The empty label.
pub const EPS: Label = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arc {
    pub input: Label,
    pub output: Label,
    pub weight: Weight,
    pub next: StateId,
}

/// A weighted transducer over integer labels. Path weights add; competing
/// paths combine by maximum.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Wfst {
    start: StateId,
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<Weight>>,
}

impl Wfst {
    pub fn new() -> Self {
        Wfst::default()
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        self.arcs.len() - 1
    }

    pub fn set_start(&mut self, s: StateId) {
        self.start = s;
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn set_final(&mut self, s: StateId, w: Weight) {
        self.finals[s] = Some(w);
    }

    pub fn final_weight(&self, s: StateId) -> Option<Weight> {
        self.finals[s]
    }

    pub fn add_arc(&mut self, src: StateId, input: Label, output: Label, weight: Weight, next: StateId) {
        self.arcs[src].push(Arc {
            input,
            output,
            weight,
            next,
        });
    }

    pub fn arcs(&self, s: StateId) -> &[Arc] {
        &self.arcs[s]
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    /// No state has two arcs with the same input label, and no input is empty.
    pub fn is_deterministic(&self) -> bool {
        self.arcs.iter().all(|arcs| {
            let mut labels: Vec<Label> = arcs.iter().map(|a| a.input).collect();
            labels.sort_unstable();
            let n = labels.len();
            labels.dedup();
            labels.len() == n && !labels.contains(&EPS)
        })
    }

    /// Best (maximum) weight of an accepting path reading `input`, ignoring
    /// outputs. Inputs must be epsilon-free.
    pub fn best_path(&self, input: &[Label]) -> Option<Weight> {
        if self.arcs.is_empty() {
            return None;
        }
        let mut cur: Vec<Option<Weight>> = alloc::vec![None; self.num_states()];
        cur[self.start] = Some(Weight::from_integer(0));
        for &l in input {
            let mut next: Vec<Option<Weight>> = alloc::vec![None; self.num_states()];
            for (s, w) in cur.iter().enumerate() {
                let Some(w) = w else { continue };
                for a in self.arcs(s).iter().filter(|a| a.input == l) {
                    let v = *w + a.weight;
                    if next[a.next].is_none_or(|x| v > x) {
                        next[a.next] = Some(v);
                    }
                }
            }
            cur = next;
        }
        cur.iter()
            .enumerate()
            .filter_map(|(s, w)| Some((*w)? + self.finals[s]?))
            .max()
    }

    /// Keeps states both reachable from the start and able to reach a final
    /// state, renumbering them in breadth-first order from the start.
    pub fn trim(&self) -> Wfst {
        let n = self.num_states();
        if n == 0 {
            return self.clone();
        }
        let mut coacc = alloc::vec![false; n];
        for s in 0..n {
            coacc[s] = self.finals[s].is_some();
        }
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if !coacc[s] && self.arcs[s].iter().any(|a| coacc[a.next]) {
                    coacc[s] = true;
                    changed = true;
                }
            }
        }
        let mut map = alloc::vec![usize::MAX; n];
        let mut out = Wfst::new();
        if !coacc[self.start] {
            let s = out.add_state();
            out.set_start(s);
            return out;
        }
        let mut queue = alloc::collections::VecDeque::new();
        map[self.start] = out.add_state();
        out.set_start(map[self.start]);
        queue.push_back(self.start);
        while let Some(s) = queue.pop_front() {
            if let Some(w) = self.finals[s] {
                out.set_final(map[s], w);
            }
            for a in &self.arcs[s] {
                if !coacc[a.next] {
                    continue;
                }
                if map[a.next] == usize::MAX {
                    map[a.next] = out.add_state();
                    queue.push_back(a.next);
                }
                out.add_arc(map[s], a.input, a.output, a.weight, map[a.next]);
            }
        }
        out
    }
}
