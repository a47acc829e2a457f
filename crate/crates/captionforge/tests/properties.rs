//! Property tests: metric ranges and identity behaviour hold for arbitrary
//! token sequences, not just the curated cases.

use proptest::prelude::*;

use captionforge::metrics::{
    bleu_sentence, cider_d, meteor_lite, rouge_l, IdfTable, CIDER_MAX_N,
};
use captionforge::text_preprocess::Language;

fn token() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "a", "the", "man", "woman", "dog", "runs", "walks", "jumps", "fast", "slowly",
    ])
    .prop_map(str::to_owned)
}

fn sentence(max_len: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(token(), 1..=max_len)
}

proptest! {
    #[test]
    fn metrics_stay_in_range(
        cand in sentence(8),
        refs in prop::collection::vec(sentence(8), 1..=3),
    ) {
        for n in 1..=4 {
            let b = bleu_sentence(&cand, &refs, n);
            prop_assert!((0.0..=1.0).contains(&b), "bleu_{n} = {b}");
        }
        let r = rouge_l(&cand, &refs);
        prop_assert!((0.0..=1.0).contains(&r), "rouge_l = {r}");
        let m = meteor_lite(&cand, &refs, Language::English);
        prop_assert!((0.0..=1.0).contains(&m), "meteor = {m}");
        let idf = IdfTable::build(&[refs.clone()], CIDER_MAX_N);
        let c = cider_d(&cand, &refs, &idf).unwrap();
        prop_assert!((0.0..=10.0).contains(&c), "cider_d = {c}");
    }

    #[test]
    fn identical_candidate_maximises_overlap_metrics(
        tokens in sentence(8),
    ) {
        let refs = vec![tokens.clone()];
        prop_assert_eq!(rouge_l(&tokens, &refs), 1.0);
        for n in 1..=4 {
            prop_assert_eq!(bleu_sentence(&tokens, &refs, n), 1.0);
        }
        // One chunk covering the whole sentence: penalty = 0.5 / len^3.
        let m = meteor_lite(&tokens, &refs, Language::English);
        let expected = 1.0 - 0.5 / (tokens.len() as f64).powi(3);
        prop_assert!((m - expected).abs() < 1e-12, "meteor = {m}, expected {expected}");
    }

    #[test]
    fn disjoint_candidate_scores_zero(
        cand_len in 1usize..=6,
        ref_len in 1usize..=6,
    ) {
        let cand: Vec<String> = (0..cand_len).map(|i| format!("x{i}")).collect();
        let refs = vec![(0..ref_len).map(|i| format!("y{i}")).collect::<Vec<_>>()];
        prop_assert_eq!(rouge_l(&cand, &refs), 0.0);
        prop_assert_eq!(meteor_lite(&cand, &refs, Language::English), 0.0);
        let idf = IdfTable::build(&[refs.clone()], CIDER_MAX_N);
        prop_assert_eq!(cider_d(&cand, &refs, &idf).unwrap(), 0.0);
    }
}
