use clas_core::conditioning::ConditionedEntry;
use clas_core::decoder::{beam_search, DecodeConfig, Fusion, NoFusion, PreparedBias};
use clas_core::fst::{compile_context, GraphemeAlphabet, WeightStrategy};
use clas_core::model::{BiasContext, ClasModel, ModelConfig, Token, Vocab};
use clas_core::tensor::{kernels, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(vocab: Vocab) -> ModelConfig {
    ModelConfig {
        feature_dim: 3,
        encoder_layers: 1,
        encoder_units: 4,
        decoder_layers: 1,
        decoder_units: 4,
        attention_dim: 4,
        attention_heads: 2,
        bias_encoder_units: 3,
        embedding_dim: 3,
        vocab,
    }
}

/// Random model with weights large enough for peaked distributions.
fn sharp_model(vocab: Vocab, seed: u64) -> ClasModel {
    let mut m = ClasModel::new(config(vocab), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for x in m.params_mut().get_mut(id).data_mut() {
            *x = rng.random_range(-1.5..1.5);
        }
    }
    m
}

fn random_features(rng: &mut ChaCha8Rng) -> Tensor {
    let k = rng.random_range(1..=4);
    Tensor::matrix(k, 3, (0..3 * k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Every token sequence of at most `max_len` tokens ending in end-of-sequence,
/// scored as model log-probability plus `lambda` times fusion.
fn exhaustive_best<F: Fusion>(
    model: &ClasModel,
    x: &Tensor,
    phrases: &[String],
    fusion: &F,
    lambda: f64,
    max_len: usize,
) -> (Vec<Token>, f64) {
    let vocab = model.vocab();
    let mut tape = Tape::inference(model.params());
    let enc = model.encode_audio(&mut tape, x).unwrap();
    let audio = model.audio_memory(&mut tape, &enc).unwrap();
    let emb = model.embed_phrases(&phrases.iter().map(|p| vocab.encode(p).unwrap()).collect::<Vec<_>>()).unwrap();
    let ctx = BiasContext::Phrases(model.bias_memory_from_values(&mut tape, &emb).unwrap());
    let mut best: (Vec<Token>, f64) = (Vec::new(), f64::NEG_INFINITY);
    let mut stack = vec![(Vec::<Token>::new(), model.initial_state(&mut tape), 0.0, fusion.start(), 0.0)];
    while let Some((tokens, state, lp, fs, fscore)) = stack.pop() {
        let prev = tokens.last().copied().unwrap_or(vocab.sos());
        let out = model.step(&mut tape, prev, &state, &audio, &ctx, None).unwrap();
        let mut logp = vec![0.0; vocab.len()];
        kernels::log_softmax(tape.value(out.logits).data(), &mut logp);
        for tok in 0..vocab.len() {
            if tok == vocab.sos() {
                continue;
            }
            if tok == vocab.eos() {
                let total = lp + logp[tok] + lambda * (fscore + fusion.finish(&fs));
                if total > best.1 {
                    best = (tokens.clone(), total);
                }
                continue;
            }
            if tokens.len() + 1 >= max_len {
                continue;
            }
            let (nfs, inc) = if tok == vocab.bias_end() {
                (fs.clone(), 0.0)
            } else {
                fusion.advance(&fs, vocab.symbol(tok).unwrap().chars().next().unwrap())
            };
            let mut t = tokens.clone();
            t.push(tok);
            stack.push((t, out.state.clone(), lp + logp[tok], nfs, fscore + inc));
        }
    }
    best
}

fn vocab4() -> Vocab {
    Vocab::new(["<s>", "</s>", "</bias>", "a"].iter().map(|s| s.to_string()).collect()).unwrap()
}

fn vocab5() -> Vocab {
    Vocab::new(["<s>", "</s>", "</bias>", "a", "b"].iter().map(|s| s.to_string()).collect()).unwrap()
}

#[test]
fn beam_matches_exhaustive_search_on_tiny_vocab() {
    let fst = compile_context(&["aa".to_string()], &GraphemeAlphabet::new("a"), WeightStrategy::EverySubword, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..100 {
        let model = sharp_model(vocab4(), i);
        let x = random_features(&mut rng);
        let phrases = vec!["a".to_string()];
        let bias = PreparedBias::new(&model, &phrases).unwrap();
        for lambda in [0.0, 0.5] {
            let cfg = DecodeConfig {
                beam_width: 64,
                max_len: 3,
                lambda,
                ..DecodeConfig::default()
            };
            let out = beam_search(&model, &x, &bias, Some(&fst), &cfg).unwrap();
            let (tokens, score) = exhaustive_best(&model, &x, &phrases, &fst, lambda, 3);
            assert!(out.finished);
            assert_eq!(out.best().tokens, tokens, "case {i} lambda {lambda}");
            assert!((out.best().total - score).abs() < 1e-9);
        }
    }
}

#[test]
fn beam_matches_exhaustive_search_with_five_symbols() {
    let fst = compile_context(&["ab".to_string()], &GraphemeAlphabet::new("ab"), WeightStrategy::BeginningOfWord, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..20 {
        let model = sharp_model(vocab5(), 1000 + i);
        let x = random_features(&mut rng);
        let bias = PreparedBias::new(&model, &[]).unwrap();
        let cfg = DecodeConfig {
            beam_width: 64,
            max_len: 4,
            lambda: 0.7,
            ..DecodeConfig::default()
        };
        let out = beam_search(&model, &x, &bias, Some(&fst), &cfg).unwrap();
        let (tokens, score) = exhaustive_best(&model, &x, &[], &fst, 0.7, 4);
        assert_eq!(out.best().tokens, tokens, "case {i}");
        assert!((out.best().total - score).abs() < 1e-9);
    }
}

#[test]
fn width_one_is_greedy() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..20 {
        let model = sharp_model(vocab5(), 50 + i);
        let x = random_features(&mut rng);
        let bias = PreparedBias::new(&model, &["ab".to_string()]).unwrap();
        let cfg = DecodeConfig {
            beam_width: 1,
            max_len: 6,
            ..DecodeConfig::default()
        };
        let out = beam_search::<NoFusion>(&model, &x, &bias, None, &cfg).unwrap();
        // Greedy reference: argmax token at every step.
        let vocab = model.vocab();
        let mut tape = Tape::inference(model.params());
        let enc = model.encode_audio(&mut tape, &x).unwrap();
        let audio = model.audio_memory(&mut tape, &enc).unwrap();
        let ctx = BiasContext::Phrases(model.bias_memory_from_values(&mut tape, bias.embeddings()).unwrap());
        let mut state = model.initial_state(&mut tape);
        let mut prev = vocab.sos();
        let mut tokens = Vec::new();
        for _ in 0..6 {
            let o = model.step(&mut tape, prev, &state, &audio, &ctx, None).unwrap();
            let logits = tape.value(o.logits).data().to_vec();
            let tok = (0..vocab.len())
                .filter(|&t| t != vocab.sos())
                .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
                .unwrap();
            if tok == vocab.eos() {
                break;
            }
            tokens.push(tok);
            state = o.state;
            prev = tok;
        }
        if out.finished {
            assert_eq!(out.best().tokens, tokens, "case {i}");
        }
    }
}

#[test]
fn lambda_zero_ignores_fusion() {
    let fst = compile_context(&["ab".to_string()], &GraphemeAlphabet::new("ab"), WeightStrategy::EndOfWord, 5.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = sharp_model(vocab5(), 3);
    let x = random_features(&mut rng);
    let bias = PreparedBias::empty(&model).unwrap();
    let cfg = DecodeConfig {
        beam_width: 4,
        max_len: 6,
        n_best: 4,
        ..DecodeConfig::default()
    };
    let a = beam_search(&model, &x, &bias, Some(&fst), &cfg).unwrap();
    let b = beam_search::<NoFusion>(&model, &x, &bias, None, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn all_empty_prefixes_match_unconditioned_decoding_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..10 {
        let model = sharp_model(vocab5(), 200 + i);
        let x = random_features(&mut rng);
        let phrases = vec!["ab".to_string(), "ba".to_string(), "a".to_string()];
        let entries: Vec<ConditionedEntry> = phrases.iter().map(|p| ConditionedEntry::unconditioned(p)).collect();
        let cfg = DecodeConfig {
            beam_width: 3,
            max_len: 8,
            n_best: 3,
            record_attention: true,
            ..DecodeConfig::default()
        };
        let plain = beam_search::<NoFusion>(&model, &x, &PreparedBias::new(&model, &phrases).unwrap(), None, &cfg).unwrap();
        let cond =
            beam_search::<NoFusion>(&model, &x, &PreparedBias::conditioned(&model, &entries).unwrap(), None, &cfg).unwrap();
        assert_eq!(plain, cond);
    }
}

#[test]
fn output_is_sorted_and_respects_n_best() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = sharp_model(vocab5(), 5);
    let x = random_features(&mut rng);
    let cfg = DecodeConfig {
        beam_width: 6,
        max_len: 5,
        n_best: 4,
        ..DecodeConfig::default()
    };
    let out = beam_search::<NoFusion>(&model, &x, &PreparedBias::empty(&model).unwrap(), None, &cfg).unwrap();
    assert!(out.hypotheses.len() <= 4);
    assert!(out.hypotheses.windows(2).all(|w| w[0].total >= w[1].total));
    for h in &out.hypotheses {
        assert!(!h.tokens.contains(&model.vocab().eos()));
        assert_eq!(h.text, model.vocab().decode(&h.tokens, true).unwrap());
    }
}

#[test]
fn recorded_attention_rows_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let model = sharp_model(vocab5(), 6);
    let x = random_features(&mut rng);
    let bias = PreparedBias::new(&model, &["ab".to_string(), "ba".to_string()]).unwrap();
    let cfg = DecodeConfig {
        beam_width: 2,
        max_len: 5,
        record_attention: true,
        ..DecodeConfig::default()
    };
    let out = beam_search::<NoFusion>(&model, &x, &bias, None, &cfg).unwrap();
    let h = out.best();
    assert_eq!(h.attention.len(), h.tokens.len() + usize::from(h.finished));
    for row in &h.attention {
        assert_eq!(row.len(), 3);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let model = sharp_model(vocab4(), 1);
    let x = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
    let bias = PreparedBias::empty(&model).unwrap();
    for cfg in [
        DecodeConfig { beam_width: 0, ..DecodeConfig::default() },
        DecodeConfig { n_best: 9, ..DecodeConfig::default() },
        DecodeConfig { lambda: -1.0, ..DecodeConfig::default() },
        DecodeConfig { max_len: 0, ..DecodeConfig::default() },
    ] {
        assert!(beam_search::<NoFusion>(&model, &x, &bias, None, &cfg).is_err());
    }
}

#[test]
fn unfinished_search_is_flagged() {
    let mut model = sharp_model(vocab4(), 2);
    // Make end-of-sequence impossible to prefer.
    let id = model.params().id("output.b").unwrap();
    model.params_mut().get_mut(id).data_mut()[1] = -1e3;
    let x = Tensor::matrix(2, 3, vec![0.1; 6]).unwrap();
    let cfg = DecodeConfig {
        beam_width: 2,
        max_len: 4,
        ..DecodeConfig::default()
    };
    let out = beam_search::<NoFusion>(&model, &x, &PreparedBias::empty(&model).unwrap(), None, &cfg).unwrap();
    assert!(!out.finished);
    assert!(!out.best().finished);
    assert_eq!(out.best().tokens.len(), 4);
}
