//! Word error rate by unit-cost edit distance.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WerReport {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_words: usize,
}

impl WerReport {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// WER as a percentage.
    pub fn wer(&self) -> f64 {
        if self.reference_words == 0 {
            return 0.0;
        }
        100.0 * self.errors() as f64 / self.reference_words as f64
    }

    /// Micro-average accumulation.
    pub fn merge(&mut self, other: &WerReport) {
        self.substitutions += other.substitutions;
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.reference_words += other.reference_words;
    }
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Minimal alignment of `hyp` against `reference`. Among alignments with the
/// fewest errors, substitutions are preferred over insertion+deletion pairs.
pub fn compute_wer(hyp: &[&str], reference: &[&str]) -> Result<WerReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let (n, m) = (reference.len(), hyp.len());
    // cost[i][j]: (errors, substitutions, insertions, deletions) aligning
    // reference[..i] with hyp[..j].
    let mut cost = vec![vec![(0usize, 0usize, 0usize, 0usize); m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = (i, 0, 0, i);
    }
    for j in 0..=m {
        cost[0][j] = (j, 0, j, 0);
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[i - 1][j - 1];
            let sub = if reference[i - 1] == hyp[j - 1] {
                diag
            } else {
                (diag.0 + 1, diag.1 + 1, diag.2, diag.3)
            };
            let up = cost[i - 1][j];
            let del = (up.0 + 1, up.1, up.2, up.3 + 1);
            let left = cost[i][j - 1];
            let ins = (left.0 + 1, left.1, left.2 + 1, left.3);
            cost[i][j] = [sub, del, ins].into_iter().min_by_key(|c| c.0).unwrap();
        }
    }
    let (_, s, ins, del) = cost[n][m];
    Ok(WerReport {
        substitutions: s,
        insertions: ins,
        deletions: del,
        reference_words: n,
    })
}
