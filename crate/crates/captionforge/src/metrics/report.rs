//! Corpus scoring: per-sentence and aggregate scores for all metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bleu::{bleu_corpus, bleu_sentence, DEFAULT_MAX_N};
use super::cider::{cider, CiderVariant};
use super::meteor::meteor_lite;
use super::ngram::IdfTable;
use super::rouge::rouge_l;
use crate::error::{Error, Result};
use crate::text_preprocess::Caption;

/// Scores of one sentence (or the corpus aggregate). Serialized key names
/// follow the evaluation-server convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    #[serde(rename = "CIDEr")]
    pub cider: f64,
    #[serde(rename = "Bleu_1")]
    pub bleu1: f64,
    #[serde(rename = "Bleu_2")]
    pub bleu2: f64,
    #[serde(rename = "Bleu_3")]
    pub bleu3: f64,
    #[serde(rename = "Bleu_4")]
    pub bleu4: f64,
    #[serde(rename = "METEOR")]
    pub meteor: f64,
    #[serde(rename = "ROUGE_L")]
    pub rouge_l: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub corpus: Scores,
    pub per_sentence: BTreeMap<String, Scores>,
}

/// Scores every candidate against the reference set with the same id.
///
/// Corpus BLEU uses the pooled corpus-level formula; the other corpus
/// aggregates are means of the per-sentence scores. Per-sentence work fans
/// out over the current rayon pool; aggregation is order-independent.
pub fn score_corpus(
    cands: &[Caption],
    refs: &BTreeMap<String, Vec<Vec<String>>>,
    idf: &IdfTable,
    variant: CiderVariant,
) -> Result<MetricReport> {
    if cands.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ref_sets = Vec::with_capacity(cands.len());
    for cand in cands {
        let set = refs
            .get(&cand.id)
            .ok_or_else(|| Error::MismatchedIds(format!("no references for id {}", cand.id)))?;
        if set.is_empty() {
            return Err(Error::MismatchedIds(format!("empty reference set for id {}", cand.id)));
        }
        ref_sets.push(set.clone());
    }

    let per_sentence: Result<Vec<(String, Scores)>> = cands
        .par_iter()
        .zip(ref_sets.par_iter())
        .map(|(cand, set)| {
            let bleus: Vec<f64> = (1..=DEFAULT_MAX_N)
                .map(|n| bleu_sentence(&cand.tokens, set, n))
                .collect();
            let scores = Scores {
                cider: cider(&cand.tokens, set, idf, variant)?,
                bleu1: bleus[0],
                bleu2: bleus[1],
                bleu3: bleus[2],
                bleu4: bleus[3],
                meteor: meteor_lite(&cand.tokens, set, cand.language),
                rouge_l: rouge_l(&cand.tokens, set),
            };
            Ok((cand.id.clone(), scores))
        })
        .collect();
    let per_sentence: BTreeMap<String, Scores> = per_sentence?.into_iter().collect();

    let cand_tokens: Vec<Vec<String>> = cands.iter().map(|c| c.tokens.clone()).collect();
    let corpus_bleu = bleu_corpus(&cand_tokens, &ref_sets, DEFAULT_MAX_N);
    let n = per_sentence.len() as f64;
    let mean = |f: fn(&Scores) -> f64| per_sentence.values().map(f).sum::<f64>() / n;
    let corpus = Scores {
        cider: mean(|s| s.cider),
        bleu1: corpus_bleu[0],
        bleu2: corpus_bleu[1],
        bleu3: corpus_bleu[2],
        bleu4: corpus_bleu[3],
        meteor: mean(|s| s.meteor),
        rouge_l: mean(|s| s.rouge_l),
    };
    Ok(MetricReport {
        corpus,
        per_sentence,
    })
}
