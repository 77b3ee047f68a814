//! Bias-conditioning: each phrase gets a prefix, and its attention slot stays
//! masked until the prefix occurs in the partial hypothesis.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::MaskEntry;

/// A conditioned bias-list entry. The embedded phrase is the suffix, or the
/// whole `prefix suffix` string when the suffix is empty.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConditionedEntry {
    pub prefix: String,
    pub suffix: String,
}

impl ConditionedEntry {
    pub fn new(prefix: &str, suffix: &str) -> Self {
        ConditionedEntry {
            prefix: prefix.into(),
            suffix: suffix.into(),
        }
    }

    /// Entry with an empty prefix: always enabled.
    pub fn unconditioned(phrase: &str) -> Self {
        ConditionedEntry::new("", phrase)
    }

    pub fn embedded(&self) -> String {
        if self.suffix.is_empty() {
            self.prefix.clone()
        } else {
            self.suffix.clone()
        }
    }
}

/// Mask over `[no-bias, entries...]`: entry `i` is open iff its prefix occurs
/// as a substring of `hypothesis`. The hypothesis must already have
/// `</bias>` and sequence markers removed.
pub fn compute_mask(entries: &[ConditionedEntry], hypothesis: &str) -> Vec<MaskEntry> {
    let mut m = Vec::with_capacity(entries.len() + 1);
    m.push(MaskEntry::Open);
    m.extend(entries.iter().map(|e| {
        if hypothesis.contains(e.prefix.as_str()) {
            MaskEntry::Open
        } else {
            MaskEntry::Blocked
        }
    }));
    m
}

fn split_words(s: &str) -> Vec<&str> {
    s.split(' ').filter(|w| !w.is_empty()).collect()
}

/// Splits `trigger w rest...` into `(trigger + first letter of w, w)` and,
/// when `rest` is non-empty, `(trigger w, rest)`. Repeated entries are kept
/// once, in first-seen order.
pub fn split_rule_based(phrases: &[String], trigger: &str) -> Result<Vec<ConditionedEntry>> {
    let trig = split_words(trigger);
    if trig.is_empty() {
        return Err(Error::Config("empty trigger".into()));
    }
    let mut out: Vec<ConditionedEntry> = Vec::new();
    let mut push = |e: ConditionedEntry| {
        if !out.contains(&e) {
            out.push(e);
        }
    };
    for phrase in phrases {
        let words = split_words(phrase);
        if !words.starts_with(&trig) || words.len() == trig.len() {
            return Err(Error::MissingTrigger(phrase.clone()));
        }
        let w = words[trig.len()];
        let first: String = w.chars().take(1).collect();
        let t = trig.join(" ");
        push(ConditionedEntry::new(&format!("{t} {first}"), w));
        let rest = &words[trig.len() + 1..];
        if !rest.is_empty() {
            push(ConditionedEntry::new(&format!("{t} {w}"), &rest.join(" ")));
        }
    }
    Ok(out)
}

/// Greedy prefix growth: starting from empty prefixes, the members of every
/// prefix group larger than `max_share` that still have suffix words are
/// extended by one word; repeats until no group can be extended. On return
/// every oversized group consists of entries with empty suffixes.
pub fn split_greedy(phrases: &[String], max_share: usize) -> Result<Vec<ConditionedEntry>> {
    if max_share == 0 {
        return Err(Error::Config("max_share must be positive".into()));
    }
    let words: Vec<Vec<&str>> = phrases.iter().map(|p| split_words(p)).collect();
    if words.iter().any(|w| w.is_empty()) {
        return Err(Error::EmptyPhrase);
    }
    let mut k = alloc::vec![0usize; words.len()];
    loop {
        let groups = prefix_groups(&words, &k);
        let mut extended = false;
        for members in groups {
            if members.len() <= max_share {
                continue;
            }
            for &i in &members {
                if k[i] < words[i].len() {
                    k[i] += 1;
                    extended = true;
                }
            }
        }
        if !extended {
            break;
        }
    }
    Ok(words
        .iter()
        .zip(&k)
        .map(|(w, &n)| ConditionedEntry::new(&w[..n].join(" "), &w[n..].join(" ")))
        .collect())
}

/// Entry indices grouped by current prefix, groups in first-member order.
pub(crate) fn prefix_groups(words: &[Vec<&str>], k: &[usize]) -> Vec<Vec<usize>> {
    let mut keys: Vec<&[&str]> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        let key = &w[..k[i]];
        match keys.iter().position(|x| *x == key) {
            Some(g) => groups[g].push(i),
            None => {
                keys.push(key);
                groups.push(alloc::vec![i]);
            }
        }
    }
    groups
}
