use clas_core::decoder::Fusion;
use clas_core::fst::{
    build_grammar, build_speller, compile_context, compose, compose_det_min, determinize, minimize, GraphemeAlphabet,
    Label, Weight, WeightStrategy, EPS, OTHER, SPACE,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

/// Best bonus count for a sequence of complete words: skip words or match
/// whole phrases, plus, when `trailing`, a proper prefix of a phrase at the
/// end. Empty words (double spaces) can only be skipped.
fn oracle(phrases: &[Vec<String>], words: &[&str]) -> i64 {
    let n = words.len();
    let mut best = vec![i64::MIN; n + 1];
    best[0] = 0;
    for i in 1..=n {
        best[i] = best[i - 1];
        for p in phrases {
            let l = p.len();
            if l <= i && best[i - l] > i64::MIN && words[i - l..i].iter().zip(p).all(|(a, b)| *a == b) {
                best[i] = best[i].max(best[i - l] + l as i64);
            }
        }
    }
    let mut v = best[n];
    for j in 0..n {
        let tail = &words[j..];
        let partial = phrases
            .iter()
            .any(|p| tail.len() < p.len() && tail.iter().zip(p).all(|(a, b)| *a == b));
        if partial {
            v = v.max(best[j] + tail.len() as i64);
        }
    }
    v
}

fn split_phrases(phrases: &[String]) -> Vec<Vec<String>> {
    phrases
        .iter()
        .map(|p| p.split_whitespace().map(String::from).collect())
        .collect()
}

/// Walks every string up to `max_len` over `graphemes` and checks the
/// cumulative score after every space and, via `finish`, at every node.
fn check_exhaustive(phrases: &[String], letters: &str, graphemes: &[char], max_len: usize) {
    let alphabet = GraphemeAlphabet::new(letters);
    let split = split_phrases(phrases);
    let bonus = 2.5;
    for strategy in WeightStrategy::ALL {
        let fst = compile_context(phrases, &alphabet, strategy, bonus).unwrap();
        let mut stack = vec![(String::new(), fst.start(), 0.0f64)];
        while let Some((text, state, total)) = stack.pop() {
            let words: Vec<&str> = text.strip_suffix(' ').unwrap_or(&text).split(' ').collect();
            let expect = bonus * oracle(&split, &words) as f64;
            let closed = total + fst.finish(&state);
            assert!(
                (closed - expect).abs() < 1e-9,
                "{strategy:?} {phrases:?} {text:?}: finish {closed} vs {expect}"
            );
            if text.ends_with(' ') {
                let words: Vec<&str> = text[..text.len() - 1].split(' ').collect();
                let expect = bonus * oracle(&split, &words) as f64;
                assert!(
                    (total - expect).abs() < 1e-9,
                    "{strategy:?} {phrases:?} {text:?}: boundary {total} vs {expect}"
                );
                assert_eq!(state.pending, 0.0);
            }
            if text.chars().count() < max_len {
                for &c in graphemes {
                    let (next, w) = fst.advance(&state, c);
                    let mut t = text.clone();
                    t.push(c);
                    stack.push((t, next, total + w));
                }
            }
        }
    }
}

fn random_phrases(rng: &mut ChaCha8Rng, letters: &[char]) -> Vec<String> {
    let n = rng.random_range(1..=5);
    (0..n)
        .map(|_| {
            let words = rng.random_range(1..=2);
            (0..words)
                .map(|_| {
                    let len = rng.random_range(1..=3);
                    (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect::<String>()
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn step_weights(fst: &clas_core::fst::ContextFst, text: &str) -> Vec<f64> {
    let mut st = fst.start();
    text.chars()
        .map(|c| {
            let (n, w) = fst.advance(&st, c);
            st = n;
            w
        })
        .collect()
}

#[test]
fn every_subword_worked_examples() {
    let a = GraphemeAlphabet::new("abcdefghijklmnopqrstuvwxyz");
    let fst = compile_context(&s(&["cat"]), &a, WeightStrategy::EverySubword, 3.0).unwrap();
    assert_eq!(step_weights(&fst, "cat "), vec![1.0, 1.0, 1.0, 0.0]);
    assert_eq!(step_weights(&fst, "car "), vec![1.0, 1.0, -2.0, 0.0]);
    assert_eq!(fst.score_text("car"), 0.0);
    assert_eq!(fst.score_text("cat"), 3.0);
    // Partial match abandoned by the word ending early.
    assert_eq!(step_weights(&fst, "ca "), vec![1.0, 1.0, -2.0]);
}

#[test]
fn end_and_beginning_of_word_examples() {
    let a = GraphemeAlphabet::new("abcdefghijklmnopqrstuvwxyz");
    let eow = compile_context(&s(&["cat"]), &a, WeightStrategy::EndOfWord, 3.0).unwrap();
    assert_eq!(step_weights(&eow, "cat "), vec![0.0, 0.0, 0.0, 3.0]);
    assert_eq!(eow.score_text("cat"), 3.0);
    let bow = compile_context(&s(&["cat"]), &a, WeightStrategy::BeginningOfWord, 3.0).unwrap();
    assert_eq!(step_weights(&bow, "cat "), vec![3.0, 0.0, 0.0, 0.0]);
    assert_eq!(step_weights(&bow, "car "), vec![3.0, 0.0, 0.0, -3.0]);
}

#[test]
fn every_subword_spreads_over_multiword_phrases() {
    let a = GraphemeAlphabet::new("abcdefghijklmnopqrstuvwxyz");
    let fst = compile_context(&s(&["ab cd"]), &a, WeightStrategy::EverySubword, 1.0).unwrap();
    let w = step_weights(&fst, "ab cd ");
    assert_eq!(w, vec![0.5, 0.5, 0.0, 0.5, 0.5, 0.0]);
    // Abandoning the phrase in its second word takes back the first too.
    assert_eq!(fst.score_text("ab "), 1.0);
    assert_eq!(fst.score_text("ab cx"), 0.0);
}

#[test]
fn unknown_graphemes_map_to_other_and_break_matches() {
    let a = GraphemeAlphabet::new("abc");
    assert_eq!(a.label('z'), OTHER);
    assert_eq!(a.label(' '), SPACE);
    let fst = compile_context(&s(&["ab"]), &a, WeightStrategy::EverySubword, 1.0).unwrap();
    assert!((fst.score_text("az ab") - 1.0).abs() < 1e-12);
    assert!((fst.score_text("abz") - 0.0).abs() < 1e-12);
}

#[test]
fn empty_phrase_list_scores_zero_everywhere() {
    let a = GraphemeAlphabet::new("ab");
    for strategy in WeightStrategy::ALL {
        let fst = compile_context(&[], &a, strategy, 1.0).unwrap();
        assert_eq!(fst.num_states(), 1);
        assert!(fst.arcs().all(|(_, _, _, w, _)| w == 0.0));
    }
}

#[test]
fn grammar_accepts_phrase_sequences_with_word_weights() {
    let g = build_grammar(&s(&["ab cd", "ab", "x"]), 2.0).unwrap();
    assert_eq!(g.words, s(&["ab", "cd", "x"]));
    assert_eq!(g.path_weight(&["ab", "cd"]), Some(4.0));
    assert_eq!(g.path_weight(&["ab"]), Some(2.0));
    assert_eq!(g.path_weight(&["x", "ab", "cd", "x"]), Some(8.0));
    assert_eq!(g.path_weight(&[]), Some(0.0));
    assert_eq!(g.path_weight(&["cd"]), None);
    assert_eq!(g.path_weight(&["zz"]), None);
    assert!(build_grammar(&s(&["  "]), 1.0).is_err());
    assert!(build_grammar(&s(&["a"]), 0.0).is_err());
}

#[test]
fn speller_round_trips_words() {
    let a = GraphemeAlphabet::new("abcd");
    let words = s(&["ab", "abc", "d"]);
    let sp = build_speller(&words, &a).unwrap();
    for (i, w) in words.iter().enumerate() {
        let mut labels: Vec<Label> = w.chars().map(|c| a.letter_label(c).unwrap()).collect();
        labels.push(SPACE);
        // Follow the unique path and collect outputs.
        let mut st = sp.start();
        let mut out = Vec::new();
        for l in labels {
            let arc = sp.arcs(st).iter().find(|x| x.input == l).expect("path exists");
            if arc.output != EPS {
                out.push(arc.output);
            }
            st = arc.next;
        }
        assert_eq!(out, vec![i as Label + 1]);
        assert_eq!(st, sp.start());
    }
    assert!(build_speller(&s(&["az"]), &a).is_err());
}

fn labels_of(a: &GraphemeAlphabet, text: &str) -> Vec<Label> {
    text.chars().map(|c| a.label(c)).collect()
}

#[test]
fn determinized_minimized_composition_is_equivalent_on_all_short_strings() {
    let a = GraphemeAlphabet::new("ab");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let phrases = random_phrases(&mut rng, &['a', 'b']);
        let g = build_grammar(&phrases, 1.0).unwrap();
        let sp = build_speller(&g.words, &a).unwrap();
        let c = compose(&sp, &g.fst);
        let dm = compose_det_min(&sp, &g.fst).unwrap();
        assert!(dm.is_deterministic());
        assert!(dm.num_states() <= determinize(&c).unwrap().fst.num_states());
        let graphemes = ['a', 'b', ' '];
        let mut stack = vec![String::new()];
        while let Some(t) = stack.pop() {
            let l = labels_of(&a, &t);
            assert_eq!(c.best_path(&l), dm.best_path(&l), "{phrases:?} {t:?}");
            if t.len() < 8 {
                for ch in graphemes {
                    stack.push(format!("{t}{ch}"));
                }
            }
        }
    }
}

#[test]
fn empty_composition_is_reported() {
    let a = GraphemeAlphabet::new("ab");
    let g = build_grammar(&s(&["ab"]), 1.0).unwrap();
    let sp = build_speller(&[], &a).unwrap();
    assert!(compose_det_min(&sp, &g.fst).is_err());
}

#[test]
fn minimize_is_idempotent() {
    let a = GraphemeAlphabet::new("abc");
    let g = build_grammar(&s(&["ab c", "abc", "cb"]), 1.0).unwrap();
    let sp = build_speller(&g.words, &a).unwrap();
    let m = compose_det_min(&sp, &g.fst).unwrap();
    let mm = minimize(&m);
    assert_eq!(m.num_states(), mm.num_states());
    assert_eq!(m.num_arcs(), mm.num_arcs());
}

#[test]
fn fusion_matches_oracle_on_hand_picked_sets() {
    let graphemes = ['a', 'b', 'c', ' ', 'x'];
    for set in [
        s(&["ab"]),
        s(&["a", "ab", "abc"]),
        s(&["ab c", "ab"]),
        s(&["a a", "a"]),
        s(&["ab ab ab"]),
        s(&["c", "ca b", "b ca", "bb", "a"]),
    ] {
        check_exhaustive(&set, "abc", &graphemes, 8);
    }
}

#[test]
fn fusion_matches_oracle_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let graphemes = ['a', 'b', 'c', ' ', 'x'];
    for _ in 0..12 {
        let phrases = random_phrases(&mut rng, &['a', 'b', 'c']);
        check_exhaustive(&phrases, "abc", &graphemes, 8);
    }
}

#[test]
fn abandoned_prefixes_net_zero_under_every_subword() {
    let a = GraphemeAlphabet::new("abcdefgh");
    let fst = compile_context(&s(&["abcdef", "abgh", "hg"]), &a, WeightStrategy::EverySubword, 4.0).unwrap();
    for word in ["a", "ab", "abc", "abcd", "abcde", "abg", "abcdeg", "abga", "h", "hgh", "abx"] {
        let mut st = fst.start();
        let mut total = 0.0;
        for c in format!("{word} ").chars() {
            let (n, w) = fst.advance(&st, c);
            st = n;
            total += w;
        }
        assert!(total.abs() < 1e-12, "{word}: {total}");
    }
}

#[test]
fn strategy_names_round_trip() {
    for w in WeightStrategy::ALL {
        assert_eq!(WeightStrategy::parse(w.name()).unwrap(), w);
    }
    assert!(WeightStrategy::parse("other").is_err());
}

#[test]
fn compiled_scorer_is_complete_and_rebuildable() {
    let a = GraphemeAlphabet::new("abc");
    let fst = compile_context(&s(&["ab", "ca b"]), &a, WeightStrategy::BeginningOfWord, 1.5).unwrap();
    assert_eq!(fst.arcs().count(), fst.num_states() * a.num_labels());
    let arcs: Vec<_> = fst.arcs().collect();
    let finals = (0..fst.num_states() as u32).map(|s| fst.final_weight(s)).collect();
    let rebuilt = clas_core::fst::ContextFst::from_parts(
        a.clone(),
        fst.strategy(),
        fst.bonus(),
        fst.words().to_vec(),
        fst.start_state(),
        finals,
        &arcs,
    )
    .unwrap();
    assert_eq!(rebuilt, fst);
    let mut missing = arcs.clone();
    missing.pop();
    let finals: Vec<f64> = (0..fst.num_states() as u32).map(|s| fst.final_weight(s)).collect();
    assert!(clas_core::fst::ContextFst::from_parts(a, fst.strategy(), 1.5, fst.words().to_vec(), 0, finals, &missing).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_score_text_matches_oracle(
        seed in any::<u64>(),
        text in "[abcx ]{0,14}",
        strat in 0usize..3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phrases = random_phrases(&mut rng, &['a', 'b', 'c']);
        let a = GraphemeAlphabet::new("abc");
        let fst = compile_context(&phrases, &a, WeightStrategy::ALL[strat], 1.0).unwrap();
        let words: Vec<&str> = text.strip_suffix(' ').unwrap_or(&text).split(' ').collect();
        let expect = oracle(&split_phrases(&phrases), &words) as f64;
        prop_assert!((fst.score_text(&text) - expect).abs() < 1e-9);
    }

    #[test]
    fn prop_weights_are_exact_rationals(n in 1i64..50, d in 1i64..50) {
        let w = Weight::new(n, d);
        prop_assert_eq!(w + Weight::new(-n, d), Weight::from_integer(0));
    }
}

/// All word sequences up to `max` words over `words`.
fn word_strings<'a>(words: &[&'a str], max: usize) -> Vec<Vec<&'a str>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max {
        let mut next = Vec::new();
        for f in &frontier {
            for w in words {
                let mut g: Vec<&str> = f.clone();
                g.push(w);
                next.push(g);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn grammar_accepts_exactly_phrase_concatenations() {
    let phrases = s(&["the cat", "the cat sat", "the dog"]);
    let g = build_grammar(&phrases, 1.0).unwrap();
    let split = split_phrases(&phrases);
    // Concatenations of whole phrases, by brute force over phrase choices.
    fn is_concat(ws: &[&str], phrases: &[Vec<String>]) -> bool {
        ws.is_empty()
            || phrases
                .iter()
                .any(|p| ws.len() >= p.len() && ws.iter().zip(p).all(|(a, b)| *a == b) && is_concat(&ws[p.len()..], phrases))
    }
    for ws in word_strings(&["the", "cat", "sat", "dog", "mat"], 4) {
        let accepted = g.path_weight(&ws);
        assert_eq!(accepted.is_some(), is_concat(&ws, &split), "{ws:?}");
        if let Some(w) = accepted {
            assert_eq!(w, ws.len() as f64);
        }
    }
    assert_eq!(g.path_weight(&["the", "cat", "sat"]), Some(3.0));
}

#[test]
fn context_automaton_accepts_exactly_grammar_renderings() {
    let a = GraphemeAlphabet::new("abcd");
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..6 {
        let phrases = random_phrases(&mut rng, &['a', 'b', 'c']);
        let g = build_grammar(&phrases, 1.0).unwrap();
        let sp = build_speller(&g.words, &a).unwrap();
        let c = compose_det_min(&sp, &g.fst).unwrap();
        let mut stack = vec![String::new()];
        while let Some(t) = stack.pop() {
            let expect = if t.is_empty() {
                Some(0.0)
            } else if let Some(body) = t.strip_suffix(' ') {
                let ws: Vec<&str> = body.split(' ').collect();
                if ws.iter().any(|w| w.is_empty()) {
                    None
                } else {
                    g.path_weight(&ws)
                }
            } else {
                None
            };
            let got = c.best_path(&labels_of(&a, &t)).map(|w| *w.numer() as f64 / *w.denom() as f64);
            assert_eq!(got, expect, "{phrases:?} {t:?}");
            if t.len() < 8 {
                for ch in ['a', 'b', 'c', 'd', ' '] {
                    stack.push(format!("{t}{ch}"));
                }
            }
        }
    }
}

#[test]
fn every_subword_failure_arcs_from_mid_states() {
    let a = GraphemeAlphabet::new("abcdefghijklmnopqrstuvwxyz");
    let fst = compile_context(&s(&["cat"]), &a, WeightStrategy::EverySubword, 3.0).unwrap();
    assert_eq!(step_weights(&fst, "cx "), vec![1.0, -1.0, 0.0]);
    assert_eq!(step_weights(&fst, "cax "), vec![1.0, 1.0, -2.0, 0.0]);
}
