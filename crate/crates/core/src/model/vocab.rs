use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub type Token = usize;

pub const SOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const BIAS_END: &str = "</bias>";

/// Ordered output-symbol inventory: graphemes plus the three special symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    sos: Token,
    eos: Token,
    bias_end: Token,
    space: Option<Token>,
}

impl Vocab {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let find_unique = |s: &str| -> Result<Token> {
            let mut it = symbols.iter().enumerate().filter(|(_, x)| x.as_str() == s);
            match (it.next(), it.next()) {
                (Some((i, _)), None) => Ok(i),
                _ => Err(Error::Config(alloc::format!(
                    "vocabulary must contain {s:?} exactly once"
                ))),
            }
        };
        let sos = find_unique(SOS)?;
        let eos = find_unique(EOS)?;
        let bias_end = find_unique(BIAS_END)?;
        for (i, s) in symbols.iter().enumerate() {
            let special = i == sos || i == eos || i == bias_end;
            if !special && s.chars().count() != 1 {
                return Err(Error::Config(alloc::format!(
                    "grapheme symbol {s:?} must be a single character"
                )));
            }
            if symbols[..i].contains(s) {
                return Err(Error::Config(alloc::format!("duplicate symbol {s:?}")));
            }
        }
        let space = symbols.iter().position(|s| s == " ");
        Ok(Vocab {
            symbols,
            sos,
            eos,
            bias_end,
            space,
        })
    }

    /// Specials first, then space, then the given graphemes in order.
    pub fn from_graphemes(graphemes: &str) -> Result<Self> {
        let mut symbols: Vec<String> = [SOS, EOS, BIAS_END, " "].iter().map(|s| s.to_string()).collect();
        symbols.extend(graphemes.chars().filter(|c| *c != ' ').map(|c| c.to_string()));
        Vocab::new(symbols)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn sos(&self) -> Token {
        self.sos
    }

    pub fn eos(&self) -> Token {
        self.eos
    }

    pub fn bias_end(&self) -> Token {
        self.bias_end
    }

    pub fn space(&self) -> Option<Token> {
        self.space
    }

    pub fn is_special(&self, t: Token) -> bool {
        t == self.sos || t == self.eos || t == self.bias_end
    }

    pub fn symbol(&self, t: Token) -> Result<&str> {
        self.symbols
            .get(t)
            .map(String::as_str)
            .ok_or(Error::TokenOutOfRange(t))
    }

    pub fn grapheme(&self, c: char) -> Result<Token> {
        let mut buf = [0u8; 4];
        let s: &str = c.encode_utf8(&mut buf);
        self.symbols
            .iter()
            .position(|x| x == s)
            .filter(|t| !self.is_special(*t))
            .ok_or(Error::UnknownGrapheme(c))
    }

    /// Graphemes of the grapheme alphabet, i.e. every non-special symbol.
    pub fn graphemes(&self) -> impl Iterator<Item = (Token, char)> + '_ {
        self.symbols
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_special(*i))
            .map(|(i, s)| (i, s.chars().next().unwrap()))
    }

    /// Tokenizes text; the literal `</bias>` becomes a single token.
    pub fn encode(&self, text: &str) -> Result<Vec<Token>> {
        let mut out = Vec::with_capacity(text.len());
        let mut rest = text;
        while let Some(c) = rest.chars().next() {
            if let Some(r) = rest.strip_prefix(BIAS_END) {
                out.push(self.bias_end);
                rest = r;
                continue;
            }
            out.push(self.grapheme(c)?);
            rest = &rest[c.len_utf8()..];
        }
        Ok(out)
    }

    /// Text rendering. Start/end symbols are dropped; `</bias>` is kept as a
    /// literal unless `strip_bias` is set.
    pub fn decode(&self, tokens: &[Token], strip_bias: bool) -> Result<String> {
        let mut s = String::new();
        for &t in tokens {
            if t == self.sos || t == self.eos || (strip_bias && t == self.bias_end) {
                continue;
            }
            s.push_str(self.symbol(t)?);
        }
        Ok(s)
    }
}
