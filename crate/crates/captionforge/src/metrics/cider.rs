//! CIDEr consensus scoring: cosine similarity of idf-weighted n-gram
//! vectors. The default CIDEr-D variant clips candidate counts to the
//! reference counts and applies a Gaussian length penalty; plain CIDEr is
//! available behind a flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ngram::{extract_ngrams, IdfTable, NGram};
use crate::error::Result;

pub const CIDER_MAX_N: usize = 4;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_SCALE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiderVariant {
    /// Count clipping + Gaussian length penalty (the leaderboard convention).
    #[default]
    D,
    /// Straight tf-idf cosine, no clipping, no length penalty.
    Plain,
}

/// idf-weighted n-gram vector of one sentence for a single order. Kept in
/// sorted order so float accumulation is reproducible run to run.
fn tfidf_vector(
    tokens: &[String],
    n: usize,
    idf: &IdfTable,
) -> (BTreeMap<NGram, f64>, f64) {
    let grams = extract_ngrams(tokens, n);
    let mut vec = BTreeMap::new();
    for (gram, &count) in grams.order(n) {
        vec.insert(gram.clone(), count as f64 * idf.idf(gram));
    }
    let norm_sq: f64 = vec.values().map(|w| w * w).sum();
    (vec, norm_sq.sqrt())
}

fn similarity(
    cand: &[String],
    reference: &[String],
    n: usize,
    idf: &IdfTable,
    variant: CiderVariant,
) -> f64 {
    let (cand_vec, cand_norm) = tfidf_vector(cand, n, idf);
    let (ref_vec, ref_norm) = tfidf_vector(reference, n, idf);
    if cand_norm == 0.0 || ref_norm == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    for (gram, &cw) in &cand_vec {
        if let Some(&rw) = ref_vec.get(gram) {
            dot += match variant {
                CiderVariant::D => cw.min(rw) * rw,
                CiderVariant::Plain => cw * rw,
            };
        }
    }
    let mut val = dot / (cand_norm * ref_norm);
    if variant == CiderVariant::D {
        let delta = cand.len() as f64 - reference.len() as f64;
        val *= (-delta * delta / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    }
    val
}

/// CIDEr score of one candidate against its reference set, averaged over
/// n-gram orders 1..=4 and over references, scaled by 10.
pub fn cider(
    cand: &[String],
    refs: &[Vec<String>],
    idf: &IdfTable,
    variant: CiderVariant,
) -> Result<f64> {
    idf.ensure_nonempty()?;
    assert!(!refs.is_empty(), "reference set must be non-empty");
    let mut sum = 0.0;
    for n in 1..=CIDER_MAX_N {
        let per_ref: f64 = refs
            .iter()
            .map(|r| similarity(cand, r, n, idf, variant))
            .sum();
        sum += per_ref / refs.len() as f64;
    }
    Ok(CIDER_SCALE * sum / CIDER_MAX_N as f64)
}

/// CIDEr-D, the default variant.
pub fn cider_d(cand: &[String], refs: &[Vec<String>], idf: &IdfTable) -> Result<f64> {
    cider(cand, refs, idf, CiderVariant::D)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn distinct_idf() -> (IdfTable, Vec<Vec<Vec<String>>>) {
        // Several distinct reference sets so every gram has idf > 0.
        let sets = vec![
            vec![toks("a man jumps high")],
            vec![toks("the cat sat down")],
            vec![toks("dogs run fast today")],
        ];
        (IdfTable::build(&sets, CIDER_MAX_N), sets)
    }

    #[test]
    fn identical_candidate_scores_ten() {
        let (idf, sets) = distinct_idf();
        let cand = toks("a man jumps high");
        let score = cider_d(&cand, &sets[0], &idf).unwrap();
        assert!((score - 10.0).abs() < 1e-9, "got {score}");
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        let (idf, sets) = distinct_idf();
        let score = cider_d(&toks("x y z w"), &sets[0], &idf).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn length_mismatch_is_penalized() {
        let (idf, _) = distinct_idf();
        // Same unigram content, repeated: unigram cosine is 1 but the
        // Gaussian penalty bites.
        let refs = vec![toks("a man jumps high")];
        let long = toks("a man jumps high a man jumps high");
        let short_score = cider_d(&toks("a man jumps high"), &refs, &idf).unwrap();
        let long_score = cider_d(&long, &refs, &idf).unwrap();
        assert!(long_score < short_score);
    }

    #[test]
    fn plain_variant_skips_length_penalty_on_unigrams() {
        let sets = vec![vec![toks("a b")], vec![toks("c d")]];
        let idf = IdfTable::build(&sets, CIDER_MAX_N);
        // Identical unigram multiset proportions, different length.
        let plain = cider(&toks("a b a b"), &sets[0], &idf, CiderVariant::Plain).unwrap();
        let d = cider(&toks("a b a b"), &sets[0], &idf, CiderVariant::D).unwrap();
        assert!(plain > d);
    }

    #[test]
    fn reference_order_does_not_matter() {
        let (idf, _) = distinct_idf();
        let refs = vec![toks("a man jumps high"), toks("the cat sat down")];
        let mut rev = refs.clone();
        rev.reverse();
        let cand = toks("a man sat down");
        let a = cider_d(&cand, &refs, &idf).unwrap();
        let b = cider_d(&cand, &rev, &idf).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_idf_errors() {
        let idf = IdfTable::build(&[], CIDER_MAX_N);
        assert!(cider_d(&toks("a"), &[toks("a")], &idf).is_err());
    }
}
