use clas_core::eval::corpus::{stack_frames, stacked_feature_dim};
use clas_core::eval::{
    attention_at_markers, corpus_wer, embedding_correlation, spearman, with_distractors, SyntheticTask, SyntheticTaskConfig,
};
use clas_core::model::{ClasModel, ModelConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_task(seed: u64) -> SyntheticTask {
    let cfg = SyntheticTaskConfig {
        alphabet_size: 6,
        lexicon_size: 30,
        oov_lexicon_size: 40,
        ..SyntheticTaskConfig::default()
    };
    SyntheticTask::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small_model(task: &SyntheticTask) -> ClasModel {
    let mut cfg = ModelConfig::desk(task.feature_dim(), task.vocab().clone());
    cfg.encoder_units = 8;
    cfg.decoder_units = 8;
    cfg.attention_dim = 8;
    cfg.bias_encoder_units = 8;
    cfg.embedding_dim = 4;
    ClasModel::new(cfg, 1).unwrap()
}

#[test]
fn spearman_known_values() {
    let x = [0.0, 8.0, 32.0, 128.0, 256.0];
    assert!((spearman(&x, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap() - 1.0).abs() < 1e-12);
    assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    // One adjacent swap of five: 1 - 6*2/(5*24) = 0.9.
    assert!((spearman(&x, &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap() - 0.9).abs() < 1e-12);
    assert_eq!(spearman(&x, &[2.0; 5]).unwrap(), 0.0);
    assert!(spearman(&x, &[1.0]).is_err());
}

#[test]
fn spearman_handles_ties_with_average_ranks() {
    // Ranks of y: [1.5, 1.5, 3]; Pearson of [1,2,3] and [1.5,1.5,3].
    let r = spearman(&[1.0, 2.0, 3.0], &[7.0, 7.0, 9.0]).unwrap();
    assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
}

#[test]
fn distractors_exclude_truth_and_are_distinct() {
    let pool: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
    let truth = vec!["p3".to_string()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let list = with_distractors(&truth, &pool, 10, &mut rng).unwrap();
    assert_eq!(list.len(), 11);
    assert_eq!(list.iter().filter(|p| *p == "p3").count(), 1);
    let mut d = list.clone();
    d.sort();
    d.dedup();
    assert_eq!(d.len(), 11);
    assert!(with_distractors(&truth, &pool, 20, &mut rng).is_err());
}

#[test]
fn embedding_correlation_diagonal_and_duplicates() {
    let task = small_task(1);
    let model = small_model(&task);
    let phrases = vec!["abc".to_string(), "abc".to_string(), "fed".to_string()];
    let c = embedding_correlation(&model, &phrases).unwrap();
    for i in 0..3 {
        assert!((c.matrix[i][i] - 1.0).abs() < 1e-12);
    }
    assert!((c.matrix[0][1] - 1.0).abs() < 1e-12);
    assert!(c.mean_off_diagonal <= c.max_off_diagonal);
    assert!(embedding_correlation(&model, &phrases[..1]).is_err());
}

#[test]
fn attention_at_markers_reports_one_probability_per_marker() {
    let task = small_task(2);
    let model = small_model(&task);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pool = task.oov_phrases(10, &mut rng).unwrap();
    let utts = task.biased_set("t", &pool, 5, &mut rng).unwrap();
    for u in &utts {
        let list = with_distractors(&u.bias_phrases, &pool, 4, &mut rng).unwrap();
        let a = attention_at_markers(&model, u, &list).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a[0] > 0.0 && a[0] < 1.0);
        // An untrained model spreads attention over all six slots.
        assert!((a[0] - 1.0 / 6.0).abs() < 0.05);
    }
}

#[test]
fn corpus_wer_micro_averages() {
    let r = corpus_wer([("a b", "a b"), ("x", "y z")]).unwrap();
    assert_eq!((r.errors(), r.reference_words), (2, 4));
    assert!(corpus_wer([("a", "")]).is_err());
}

#[test]
fn generation_is_deterministic() {
    let a = small_task(5);
    let b = small_task(5);
    assert_eq!(a.lexicon(), b.lexicon());
    let mut r1 = ChaCha8Rng::seed_from_u64(9);
    let mut r2 = ChaCha8Rng::seed_from_u64(9);
    assert_eq!(a.training_set(5, &mut r1).unwrap(), b.training_set(5, &mut r2).unwrap());
}

#[test]
fn biased_sets_use_oov_words_only() {
    let task = small_task(6);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pool = task.oov_phrases(8, &mut rng).unwrap();
    for u in task.biased_set("b", &pool, 16, &mut rng).unwrap() {
        let phrase = &u.bias_phrases[0];
        assert!(u.transcript.ends_with(phrase.as_str()));
        for w in phrase.split(' ') {
            assert!(!task.lexicon().contains(&w.to_string()));
        }
        assert_eq!(u.features.cols(), stacked_feature_dim(task.vocab()));
    }
}

proptest! {
    #[test]
    fn prop_stacking_shape(k in 1usize..40, w in 1usize..5) {
        let raw: Vec<Vec<f64>> = (0..k).map(|i| vec![i as f64; w]).collect();
        let t = stack_frames(&raw, w).unwrap();
        prop_assert_eq!(t.rows(), k.div_ceil(3));
        prop_assert_eq!(t.cols(), 3 * w);
        // Frame i lands in row i / 3, slot i % 3.
        for i in 0..k {
            prop_assert_eq!(t.row(i / 3)[(i % 3) * w], i as f64);
        }
    }
}
