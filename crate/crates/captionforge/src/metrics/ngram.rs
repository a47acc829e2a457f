//! N-gram multisets and document-frequency tables shared by the n-gram
//! metrics.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type NGram = Vec<String>;

/// Counts of every contiguous n-gram of a sentence for n = 1..=max_n.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramMultiset {
    /// counts[n-1] maps each n-gram to its multiplicity.
    counts: Vec<HashMap<NGram, usize>>,
}

impl NGramMultiset {
    pub fn max_n(&self) -> usize {
        self.counts.len()
    }

    /// Counts for order `n` (1-based).
    pub fn order(&self, n: usize) -> &HashMap<NGram, usize> {
        &self.counts[n - 1]
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts
            .get(gram.len() - 1)
            .and_then(|m| m.get(gram))
            .copied()
            .unwrap_or(0)
    }

    /// Total number of n-grams of order `n`, i.e. max(0, len - n + 1).
    pub fn total(&self, n: usize) -> usize {
        self.counts[n - 1].values().sum()
    }
}

/// Extracts every contiguous n-gram for n = 1..=max_n with multiplicity.
pub fn extract_ngrams(tokens: &[String], max_n: usize) -> NGramMultiset {
    assert!(max_n >= 1, "max_n must be at least 1");
    let mut counts = vec![HashMap::new(); max_n];
    for n in 1..=max_n {
        if tokens.len() < n {
            break;
        }
        let map = &mut counts[n - 1];
        for window in tokens.windows(n) {
            *map.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    NGramMultiset { counts }
}

/// Document frequencies of n-grams over a corpus of reference sets. A
/// "document" is one reference set; a gram counts once per set no matter how
/// often it appears inside.
#[derive(Debug, Clone)]
pub struct IdfTable {
    num_docs: usize,
    doc_freq: HashMap<NGram, usize>,
}

impl IdfTable {
    /// Builds the table from reference sets (each a list of tokenized
    /// references).
    pub fn build(ref_sets: &[Vec<Vec<String>>], max_n: usize) -> Self {
        let mut doc_freq: HashMap<NGram, usize> = HashMap::new();
        for ref_set in ref_sets {
            let mut seen: HashMap<NGram, ()> = HashMap::new();
            for reference in ref_set {
                let grams = extract_ngrams(reference, max_n);
                for n in 1..=max_n {
                    for gram in grams.order(n).keys() {
                        seen.entry(gram.clone()).or_insert(());
                    }
                }
            }
            for gram in seen.into_keys() {
                *doc_freq.entry(gram).or_insert(0) += 1;
            }
        }
        IdfTable {
            num_docs: ref_sets.len(),
            doc_freq,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn doc_freq(&self, gram: &[String]) -> usize {
        self.doc_freq.get(gram).copied().unwrap_or(0)
    }

    /// log(N / df). Grams unseen in the reference corpus get idf 0 (treated
    /// as maximally common).
    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.doc_freq(gram);
        if df == 0 {
            0.0
        } else {
            (self.num_docs as f64 / df as f64).ln()
        }
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.num_docs == 0 {
            Err(Error::EmptyIdf)
        } else {
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn extract_counts_with_multiplicity() {
        let grams = extract_ngrams(&toks("a b a"), 4);
        assert_eq!(grams.count(&toks("a")), 2);
        assert_eq!(grams.count(&toks("b")), 1);
        assert_eq!(grams.count(&toks("a b")), 1);
        assert_eq!(grams.count(&toks("b a")), 1);
        assert_eq!(grams.total(3), 1);
        assert_eq!(grams.total(4), 0);
    }

    #[test]
    fn empty_and_single_token() {
        let empty = extract_ngrams(&[], 4);
        for n in 1..=4 {
            assert_eq!(empty.total(n), 0);
        }
        let one = extract_ngrams(&toks("a"), 4);
        assert_eq!(one.total(1), 1);
        assert_eq!(one.total(2), 0);
    }

    #[test]
    fn total_matches_window_count() {
        let tokens = toks("a b c d e");
        let grams = extract_ngrams(&tokens, 4);
        for n in 1..=4 {
            assert_eq!(grams.total(n), tokens.len() - n + 1);
        }
    }

    #[test]
    fn idf_of_ubiquitous_gram_is_zero() {
        let sets = vec![
            vec![toks("a b")],
            vec![toks("c a")],
            vec![toks("a d")],
        ];
        let idf = IdfTable::build(&sets, 4);
        assert_eq!(idf.idf(&toks("a")), 0.0);
        assert!((idf.idf(&toks("b")) - (3.0f64).ln()).abs() < 1e-12);
        // unseen gram falls back to idf 0
        assert_eq!(idf.idf(&toks("zzz")), 0.0);
    }

    #[test]
    fn doc_freq_counts_sets_not_occurrences() {
        let sets = vec![vec![toks("a a a"), toks("a")], vec![toks("b")]];
        let idf = IdfTable::build(&sets, 1);
        assert_eq!(idf.doc_freq(&toks("a")), 1);
    }
}
