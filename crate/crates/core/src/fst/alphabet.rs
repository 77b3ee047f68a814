use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::wfst::Label;
use crate::error::{Error, Result};

/// Input label of the word-boundary space.
pub const SPACE: Label = 1;
/// Input label shared by every grapheme outside the alphabet.
pub const OTHER: Label = 2;
const FIRST_LETTER: Label = 3;

/// Grapheme labels: space, a catch-all for unknown graphemes, then the
/// letters in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphemeAlphabet {
    letters: Vec<char>,
}

impl GraphemeAlphabet {
    /// Letters in the given order; spaces and repeats are dropped.
    pub fn new(letters: &str) -> Self {
        let mut out: Vec<char> = Vec::new();
        for c in letters.chars() {
            if c != ' ' && !out.contains(&c) {
                out.push(c);
            }
        }
        GraphemeAlphabet { letters: out }
    }

    pub fn letters(&self) -> &[char] {
        &self.letters
    }

    pub fn as_string(&self) -> String {
        self.letters.iter().collect()
    }

    /// Label for any grapheme; unknown graphemes map to [`OTHER`].
    pub fn label(&self, c: char) -> Label {
        if c == ' ' {
            return SPACE;
        }
        match self.letters.iter().position(|x| *x == c) {
            Some(i) => FIRST_LETTER + i as Label,
            None => OTHER,
        }
    }

    /// Label for a grapheme that must belong to the alphabet.
    pub fn letter_label(&self, c: char) -> Result<Label> {
        match self.label(c) {
            OTHER => Err(Error::UnknownGrapheme(c)),
            l => Ok(l),
        }
    }

    /// All non-empty input labels: space, other, letters.
    pub fn labels(&self) -> impl Iterator<Item = Label> {
        SPACE..FIRST_LETTER + self.letters.len() as Label
    }

    /// Labels that do not end a word.
    pub fn word_labels(&self) -> impl Iterator<Item = Label> {
        OTHER..FIRST_LETTER + self.letters.len() as Label
    }

    pub fn num_labels(&self) -> usize {
        self.letters.len() + 2
    }

    /// Printable form: `<space>`, `<other>`, or the letter.
    pub fn symbol(&self, l: Label) -> Option<String> {
        match l {
            SPACE => Some("<space>".into()),
            OTHER => Some("<other>".into()),
            l if l >= FIRST_LETTER => self.letters.get((l - FIRST_LETTER) as usize).map(|c| c.to_string()),
            _ => None,
        }
    }

    pub fn parse_symbol(&self, s: &str) -> Option<Label> {
        match s {
            "<space>" => Some(SPACE),
            "<other>" => Some(OTHER),
            _ => {
                let mut it = s.chars();
                let c = it.next()?;
                if it.next().is_some() {
                    return None;
                }
                self.letter_label(c).ok()
            }
        }
    }
}
