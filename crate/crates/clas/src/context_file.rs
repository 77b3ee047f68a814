//! Text serialization of a compiled [`ContextFst`].
//!
//! ```text
//! clas-context 1
//! strategy every-subword
//! bonus 2
//! alphabet abc
//! words 2
//! cat
//! dog
//! start 0
//! states 5
//! final <state> <weight>        one line per state
//! arc <src> <label> <out> <weight> <dst>
//! ```
//!
//! Weights use the shortest decimal form that reads back to the same `f64`,
//! so a file round-trips byte for byte.

use std::fmt::Write as _;

use clas_core::fst::{ContextFst, GraphemeAlphabet, Label, WeightStrategy};

use crate::error::{Error, Result};

const HEADER: &str = "clas-context 1";

pub fn encode(fst: &ContextFst) -> String {
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "strategy {}", fst.strategy().name()).unwrap();
    writeln!(s, "bonus {}", fst.bonus()).unwrap();
    writeln!(s, "alphabet {}", fst.alphabet().as_string()).unwrap();
    writeln!(s, "words {}", fst.words().len()).unwrap();
    for w in fst.words() {
        writeln!(s, "{w}").unwrap();
    }
    writeln!(s, "start {}", fst.start_state()).unwrap();
    writeln!(s, "states {}", fst.num_states()).unwrap();
    for q in 0..fst.num_states() as u32 {
        writeln!(s, "final {q} {}", fst.final_weight(q)).unwrap();
    }
    for (src, input, output, w, dst) in fst.arcs() {
        writeln!(s, "arc {src} {input} {output} {w} {dst}").unwrap();
    }
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a str,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, reason: impl std::fmt::Display) -> Error {
        Error::format(self.origin, format!("line {}: {reason}", line + 1))
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        self.it.next().ok_or_else(|| Error::format(self.origin, "unexpected end of file"))
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (i, l) = self.next()?;
        let rest = l
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(i, format!("expected `{key}`")))?;
        Ok((i, rest))
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let (i, v) = self.field(key)?;
        v.parse().map_err(|_| self.err(i, format!("bad {key} value {v:?}")))
    }
}

/// Parses a compiled context; `origin` names the source in errors.
pub fn decode(text: &str, origin: &str) -> Result<ContextFst> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        origin,
    };
    let (i, h) = lines.next()?;
    if h != HEADER {
        return Err(lines.err(i, "not a compiled context file"));
    }
    let (i, s) = lines.field("strategy")?;
    let strategy = WeightStrategy::parse(s).map_err(|e| lines.err(i, e))?;
    let bonus: f64 = lines.number("bonus")?;
    let (_, letters) = lines.field("alphabet")?;
    let alphabet = GraphemeAlphabet::new(letters);
    let n_words: usize = lines.number("words")?;
    let words = (0..n_words).map(|_| lines.next().map(|(_, w)| w.to_string())).collect::<Result<Vec<_>>>()?;
    let start: u32 = lines.number("start")?;
    let n_states: usize = lines.number("states")?;
    let mut finals = vec![0.0; n_states];
    for q in 0..n_states {
        let (i, rest) = lines.field("final")?;
        let parts: Vec<&str> = rest.split(' ').collect();
        match parts.as_slice() {
            [s, w] if s.parse::<usize>() == Ok(q) => {
                finals[q] = w.parse().map_err(|_| lines.err(i, "bad final weight"))?;
            }
            _ => return Err(lines.err(i, "bad final line")),
        }
    }
    let mut arcs = Vec::new();
    for (i, l) in lines.it.by_ref() {
        let parts: Vec<&str> = l.split(' ').collect();
        let arc = match parts.as_slice() {
            ["arc", src, input, output, w, dst] => (|| {
                Some((
                    src.parse::<u32>().ok()?,
                    input.parse::<Label>().ok()?,
                    output.parse::<Label>().ok()?,
                    w.parse::<f64>().ok()?,
                    dst.parse::<u32>().ok()?,
                ))
            })(),
            _ => None,
        };
        arcs.push(arc.ok_or_else(|| Error::format(origin, format!("line {}: bad arc line", i + 1)))?);
    }
    ContextFst::from_parts(alphabet, strategy, bonus, words, start, finals, &arcs)
        .map_err(|e| Error::format(origin, e.to_string()))
}
