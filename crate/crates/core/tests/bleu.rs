//! Corpus BLEU and rBLEU against a brute-force oracle and hand counts.

mod common;

use common::{brute_bleu, random_corpus};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use slt_core::metrics::{corpus_bleu, corpus_bleu_with, rbleu, tokenize_for_scoring, BleuConfig, ExclusionList};
use slt_core::tensor::seeded_rng;

fn tok(c: &[String]) -> Vec<Vec<String>> {
    c.iter().map(|s| tokenize_for_scoring(s)).collect()
}

#[test]
fn matches_brute_force_counting() {
    for seed in 0..50 {
        let mut rng = seeded_rng(seed, 0);
        let refs = random_corpus(&mut rng, 10, 20, 30);
        let hyps = random_corpus(&mut rng, 10, 20, 30);
        let got = corpus_bleu(&hyps, &refs).unwrap();
        let want = brute_bleu(&tok(&hyps), &tok(&refs));
        assert_eq!((got.hyp_len, got.ref_len), (want.c, want.r));
        assert!((got.brevity_penalty - want.bp).abs() < 1e-9);
        for n in 0..4 {
            assert!((got.precisions[n] - want.precisions[n]).abs() < 1e-9, "corpus {seed} p{}", n + 1);
            assert!((got.bleu[n] - want.bleu[n]).abs() < 1e-9, "corpus {seed} BLEU-{}", n + 1);
        }
    }
}

#[test]
fn matches_brute_force_on_overlapping_corpora() {
    // a 4-word vocabulary makes higher-order matches common
    let mut scored = 0;
    for seed in 0..50 {
        let mut rng = seeded_rng(seed, 1);
        let refs = random_corpus(&mut rng, 10, 4, 30);
        let hyps = random_corpus(&mut rng, 10, 4, 30);
        let got = corpus_bleu(&hyps, &refs).unwrap();
        let want = brute_bleu(&tok(&hyps), &tok(&refs));
        for n in 0..4 {
            assert!((got.bleu[n] - want.bleu[n]).abs() < 1e-9, "corpus {seed} BLEU-{}", n + 1);
        }
        scored += usize::from(got.score() > 0.0);
    }
    assert!(scored >= 40, "only {scored} corpora had 4-gram matches");
}

#[test]
fn identical_corpora_score_one_hundred() {
    let c = ["the cat sat on the mat", "a dog ran home today ok"];
    let r = corpus_bleu(&c, &c).unwrap();
    assert_eq!(r.bleu, [100.0; 4]);
    assert_eq!(r.brevity_penalty, 1.0);
}

#[test]
fn clipping_example() {
    // four "the" in the candidate, one in the reference: min(4, 1) / 4
    let r = corpus_bleu(&["the the the the"], &["the cat"]).unwrap();
    let oracle = brute_bleu(&tok(&["the the the the".into()]), &tok(&["the cat".into()]));
    assert_eq!(r.precisions[0], 0.25);
    assert_eq!(oracle.precisions[0], 0.25);
    assert_eq!(r.precisions[1], 0.0);
    assert_eq!(r.score(), 0.0);
    assert_eq!(r.brevity_penalty, 1.0);
}

#[test]
fn brevity_penalty_for_short_candidates() {
    let r = corpus_bleu(&["the cat"], &["the cat sat"]).unwrap();
    assert_eq!(r.precisions[..2], [1.0, 1.0]);
    assert!((r.brevity_penalty - (1.0f64 - 1.5).exp()).abs() < 1e-15);
    assert!((r.bleu[1] - 100.0 * (-0.5f64).exp()).abs() < 1e-9);
    // equal length: no penalty
    assert_eq!(corpus_bleu(&["a b"], &["b a"]).unwrap().brevity_penalty, 1.0);
}

#[test]
fn scoring_tokenizer_lowercases_and_splits_punctuation() {
    assert_eq!(tokenize_for_scoring("Hello, World!"), ["hello", ",", "world", "!"]);
    let r = corpus_bleu(&["Hello, world."], &["hello , world ."]).unwrap();
    assert_eq!(r.score(), 100.0);
}

#[test]
fn errors_and_degenerate_corpora() {
    assert!(corpus_bleu(&["a"], &["a", "b"]).is_err());
    assert!(corpus_bleu::<&str, &str>(&[], &[]).is_err());
    let r = corpus_bleu(&[""], &["a b"]).unwrap();
    assert_eq!(r.score(), 0.0);
    assert!(r.warning.is_some());
}

#[test]
fn smoothing_flag_rescues_zero_precision() {
    let plain = corpus_bleu(&["a b c d"], &["a x c y"]).unwrap();
    assert_eq!(plain.score(), 0.0);
    let smooth = corpus_bleu_with(&["a b c d"], &["a x c y"], BleuConfig { smooth: true }).unwrap();
    assert!(smooth.score() > 0.0);
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(0u8..6, 0..12)
        .prop_map(|w| w.iter().map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "))
}

proptest! {
    #[test]
    fn order_and_duplication_do_not_matter(
        pairs in prop::collection::vec((sentence(), sentence()), 1..12),
        k in 2usize..4,
        seed in 0u64..1000,
    ) {
        let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
        let base = corpus_bleu(&h, &r).unwrap();

        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut seeded_rng(seed, 0));
        let (hs, rs): (Vec<String>, Vec<String>) = shuffled.into_iter().unzip();
        prop_assert_eq!(&corpus_bleu(&hs, &rs).unwrap(), &base);

        let hk: Vec<String> = (0..k).flat_map(|_| h.clone()).collect();
        let rk: Vec<String> = (0..k).flat_map(|_| r.clone()).collect();
        let dup = corpus_bleu(&hk, &rk).unwrap();
        prop_assert_eq!(dup.precisions, base.precisions);
        prop_assert_eq!(dup.brevity_penalty, base.brevity_penalty);
        for n in 0..4 {
            prop_assert!((dup.bleu[n] - base.bleu[n]).abs() < 1e-9);
        }
    }

    #[test]
    fn cumulative_scores_fall_when_precisions_fall(
        pairs in prop::collection::vec((sentence(), sentence()), 1..12),
    ) {
        let (h, r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        let rep = corpus_bleu(&h, &r).unwrap();
        let p = rep.precisions;
        if p.iter().all(|&x| x > 0.0) && p.windows(2).all(|w| w[1] <= w[0]) {
            for k in 1..4 {
                prop_assert!(rep.bleu[k] <= rep.bleu[k - 1] + 1e-9);
            }
        }
        for &x in &p {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert!(rep.brevity_penalty > 0.0 && rep.brevity_penalty <= 1.0 || rep.warning.is_some());
    }
}

#[test]
fn empty_exclusions_reproduce_bleu_exactly() {
    for seed in 0..20 {
        let mut rng = seeded_rng(seed, 2);
        let refs = random_corpus(&mut rng, 10, 20, 30);
        let hyps = random_corpus(&mut rng, 10, 20, 30);
        assert_eq!(rbleu(&hyps, &refs, &ExclusionList::empty()).unwrap(), corpus_bleu(&hyps, &refs).unwrap());
    }
}

#[test]
fn exclusion_filters_before_counting() {
    let excl = ExclusionList::from_words(["so", "i", "am"]);
    let got = rbleu(&["so i am happy"], &["So I am glad"], &excl).unwrap();
    let want = brute_bleu(&[vec!["happy".to_string()]], &[vec!["glad".to_string()]]);
    assert_eq!((got.hyp_len, got.ref_len), (1, 1));
    assert_eq!(got.precisions[0], want.precisions[0]);
    assert_eq!(got.score(), want.bleu[3]);
    assert_eq!(got, corpus_bleu(&["happy"], &["glad"]).unwrap());
}

#[test]
fn excluding_every_word_gives_a_flagged_zero_report() {
    let excl = ExclusionList::from_words(["the", "cat"]);
    let r = rbleu(&["the cat"], &["the cat"], &excl).unwrap();
    assert_eq!(r.score(), 0.0);
    assert!(r.warning.is_some());
}
