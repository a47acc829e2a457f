//! Corpus- and sentence-level BLEU with clipped n-gram precision, geometric
//! mean over orders, and a closest-reference-length brevity penalty.

use super::ngram::extract_ngrams;

pub const DEFAULT_MAX_N: usize = 4;

/// Clipped match count and candidate total for one order.
fn clipped_counts(cand: &[String], refs: &[Vec<String>], n: usize) -> (usize, usize) {
    if cand.len() < n {
        return (0, 0);
    }
    let cand_grams = extract_ngrams(cand, n);
    let ref_grams: Vec<_> = refs.iter().map(|r| extract_ngrams(r, n)).collect();
    let mut matched = 0;
    let mut total = 0;
    for (gram, &count) in cand_grams.order(n) {
        total += count;
        let max_ref = ref_grams.iter().map(|g| g.count(gram)).max().unwrap_or(0);
        matched += count.min(max_ref);
    }
    (matched, total)
}

/// Reference length closest to `cand_len`; ties broken toward the shorter
/// reference.
fn closest_ref_len(cand_len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(cand_len), len))
        .unwrap_or(0)
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// Corpus BLEU-1..max_n. Matched/total counts are pooled over the corpus
/// before taking precisions; any order with zero pooled matches zeroes the
/// scores that include it.
pub fn bleu_corpus(
    cands: &[Vec<String>],
    ref_sets: &[Vec<Vec<String>>],
    max_n: usize,
) -> Vec<f64> {
    assert_eq!(cands.len(), ref_sets.len(), "aligned corpora required");
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut cand_len_sum = 0usize;
    let mut ref_len_sum = 0usize;
    for (cand, refs) in cands.iter().zip(ref_sets) {
        for n in 1..=max_n {
            let (m, t) = clipped_counts(cand, refs, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
        cand_len_sum += cand.len();
        ref_len_sum += closest_ref_len(cand.len(), refs);
    }
    let bp = brevity_penalty(cand_len_sum, ref_len_sum);
    let precisions: Vec<f64> = (0..max_n)
        .map(|i| {
            if total[i] == 0 {
                0.0
            } else {
                matched[i] as f64 / total[i] as f64
            }
        })
        .collect();
    (1..=max_n)
        .map(|k| {
            if precisions[..k].iter().any(|&p| p == 0.0) {
                0.0
            } else {
                let log_mean =
                    precisions[..k].iter().map(|p| p.ln()).sum::<f64>() / k as f64;
                bp * log_mean.exp()
            }
        })
        .collect()
}

/// Sentence BLEU-max_n with add-one smoothing: any order whose clipped match
/// count is zero uses (matched+1)/(total+1) instead.
pub fn bleu_sentence(cand: &[String], refs: &[Vec<String>], max_n: usize) -> f64 {
    assert!(!refs.is_empty(), "reference set must be non-empty");
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (m, t) = clipped_counts(cand, refs, n);
        let p = if m == 0 {
            (m + 1) as f64 / (t + 1) as f64
        } else {
            m as f64 / t as f64
        };
        log_sum += p.ln();
    }
    let bp = brevity_penalty(cand.len(), closest_ref_len(cand.len(), refs));
    bp * (log_sum / max_n as f64).exp()
}
