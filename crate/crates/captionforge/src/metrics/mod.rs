//! Sentence- and corpus-level caption quality metrics: BLEU-1..4, ROUGE-L,
//! CIDEr / CIDEr-D, and METEOR-lite.

pub mod bleu;
pub mod cider;
pub mod meteor;
pub mod ngram;
pub mod report;
pub mod rouge;

pub use bleu::{bleu_corpus, bleu_sentence, DEFAULT_MAX_N};
pub use cider::{cider, cider_d, CiderVariant, CIDER_MAX_N};
pub use meteor::meteor_lite;
pub use ngram::{extract_ngrams, IdfTable, NGram, NGramMultiset};
pub use report::{score_corpus, MetricReport, Scores};
pub use rouge::rouge_l;
