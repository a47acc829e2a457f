//! Tokenization, truncation, vocabulary construction and id encoding.
//!
//! English captions are lowercased, punctuation is split into standalone
//! tokens, and the result is whitespace-split. Chinese captions must arrive
//! pre-segmented (words separated by whitespace); they are split on
//! whitespace only. Captions are truncated to 30 tokens and words below the
//! frequency threshold map to UNK.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CAPTION_LEN: usize = 30;
pub const DEFAULT_MIN_COUNT: usize = 5;

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    English,
    Chinese,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Language::English => write!(f, "english"),
            Language::Chinese => write!(f, "chinese"),
        }
    }
}

/// A tokenized caption keyed by an opaque string id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption {
    pub id: String,
    pub tokens: Vec<String>,
    pub language: Language,
}

impl Caption {
    /// Tokenizes and truncates `raw` under the rules for `language`.
    pub fn new(id: impl Into<String>, raw: &str, language: Language) -> Self {
        let tokens = truncate(tokenize(raw, language), MAX_CAPTION_LEN);
        Caption {
            id: id.into(),
            tokens,
            language,
        }
    }
}

/// Splits `raw` into tokens. English text is lowercased and punctuation
/// characters become standalone tokens; Chinese text is split on whitespace
/// only (the input carries pre-segmented words).
pub fn tokenize(raw: &str, language: Language) -> Vec<String> {
    match language {
        Language::English => {
            let lowered = raw.to_lowercase();
            let mut spaced = String::with_capacity(lowered.len() + 8);
            for c in lowered.chars() {
                if !c.is_whitespace() && !c.is_alphanumeric() {
                    spaced.push(' ');
                    spaced.push(c);
                    spaced.push(' ');
                } else {
                    spaced.push(c);
                }
            }
            spaced.split_whitespace().map(str::to_owned).collect()
        }
        Language::Chinese => raw.split_whitespace().map(str::to_owned).collect(),
    }
}

/// Returns the first `max_len` tokens, order preserved.
pub fn truncate(mut tokens: Vec<String>, max_len: usize) -> Vec<String> {
    tokens.truncate(max_len);
    tokens
}

/// Token-to-id mapping with reserved PAD/BOS/EOS/UNK ids, built from corpus
/// frequencies. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    min_count: usize,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary keeping every token whose corpus frequency is at
    /// least `min_count`. Ids are assigned after the four reserved tokens in
    /// descending frequency order, ties broken lexicographically.
    pub fn build<'a, I>(corpus: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Caption>,
    {
        let mut freq: HashMap<&str, usize> = HashMap::new();
        let mut total = 0usize;
        for caption in corpus {
            for token in &caption.tokens {
                if RESERVED_TOKENS.contains(&token.as_str()) {
                    continue;
                }
                *freq.entry(token).or_insert(0) += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|&(_, count)| count >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_token: Vec<String> =
            RESERVED_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(kept.into_iter().map(|(token, _)| token.to_owned()));
        Ok(Self::from_tokens(id_to_token, min_count))
    }

    fn from_tokens(id_to_token: Vec<String>, min_count: usize) -> Self {
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(id, token)| (token.clone(), id))
            .collect();
        Vocabulary {
            token_to_id,
            id_to_token,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Result<&str> {
        self.id_to_token
            .get(id)
            .map(String::as_str)
            .ok_or(Error::IdOutOfRange {
                id,
                vocab_size: self.id_to_token.len(),
            })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Maps tokens to ids (unknown tokens to UNK) and wraps the result in
    /// BOS/EOS markers.
    pub fn encode(&self, caption: &Caption) -> Vec<usize> {
        let mut ids = Vec::with_capacity(caption.tokens.len() + 2);
        ids.push(BOS_ID);
        for token in &caption.tokens {
            ids.push(self.id_of(token).unwrap_or(UNK_ID));
        }
        ids.push(EOS_ID);
        ids
    }

    /// Maps ids back to tokens, dropping BOS/EOS/PAD. Inverse of [`encode`]
    /// for in-vocabulary captions.
    ///
    /// [`encode`]: Vocabulary::encode
    pub fn decode_ids(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut tokens = Vec::with_capacity(ids.len());
        for &id in ids {
            let token = self.token_of(id)?;
            if id == BOS_ID || id == EOS_ID || id == PAD_ID {
                continue;
            }
            tokens.push(token.to_owned());
        }
        Ok(tokens)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "min_count": self.min_count,
            "tokens": self.id_to_token,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let file: VocabularyFile = serde_json::from_value(value.clone())?;
        if file.tokens.len() < RESERVED_TOKENS.len()
            || file.tokens[..4] != RESERVED_TOKENS.map(str::to_owned)
        {
            return Err(Error::InvalidInput(
                "vocabulary file must start with the reserved tokens".into(),
            ));
        }
        Ok(Self::from_tokens(file.tokens, file.min_count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caption(raw: &str, language: Language) -> Caption {
        Caption::new("t", raw, language)
    }

    #[test]
    fn english_tokenize_lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("A Man Jumps.", Language::English),
            vec!["a", "man", "jumps", "."]
        );
    }

    #[test]
    fn empty_input_yields_empty_sequence() {
        assert!(tokenize("", Language::English).is_empty());
        assert!(tokenize("", Language::Chinese).is_empty());
    }

    #[test]
    fn chinese_tokenize_splits_whitespace_only() {
        assert_eq!(
            tokenize("一个 男人 跳", Language::Chinese),
            vec!["一个", "男人", "跳"]
        );
    }

    #[test]
    fn truncate_keeps_prefix() {
        let tokens: Vec<String> = (0..31).map(|i| format!("t{i}")).collect();
        let truncated = truncate(tokens.clone(), 30);
        assert_eq!(truncated, tokens[..30]);
        assert_eq!(truncate(vec![], 30), Vec::<String>::new());
        assert_eq!(
            truncate(vec!["a".into(), "b".into()], 1),
            vec!["a".to_string()]
        );
    }

    #[test]
    fn truncate_is_idempotent() {
        let tokens: Vec<String> = (0..40).map(|i| format!("t{i}")).collect();
        let once = truncate(tokens, 30);
        assert_eq!(truncate(once.clone(), 30), once);
    }

    #[test]
    fn vocabulary_filters_below_min_count() {
        let mut corpus = vec![];
        for _ in 0..5 {
            corpus.push(caption("a", Language::English));
        }
        for _ in 0..4 {
            corpus.push(caption("b", Language::English));
        }
        let vocab = Vocabulary::build(&corpus, 5).unwrap();
        assert!(vocab.contains("a"));
        assert!(!vocab.contains("b"));
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let corpus = vec![caption("x y z", Language::English)];
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        assert!(vocab.contains("x") && vocab.contains("y") && vocab.contains("z"));
        assert_eq!(vocab.len(), 7);
    }

    #[test]
    fn repeated_caption_keeps_all_tokens() {
        let corpus: Vec<_> = (0..5).map(|_| caption("a b c", Language::English)).collect();
        let vocab = Vocabulary::build(&corpus, 5).unwrap();
        assert!(vocab.contains("a") && vocab.contains("b") && vocab.contains("c"));
    }

    #[test]
    fn empty_corpus_errors() {
        let corpus = vec![caption("", Language::English)];
        assert!(matches!(
            Vocabulary::build(&corpus, 5),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn vocabulary_order_is_deterministic() {
        let corpus = vec![
            caption("b b a a c", Language::English),
            caption("c a b", Language::English),
        ];
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        // a:3 b:3 c:2 -> ids: a=4 b=5 c=6 (frequency desc, ties lexicographic)
        assert_eq!(vocab.id_of("a"), Some(4));
        assert_eq!(vocab.id_of("b"), Some(5));
        assert_eq!(vocab.id_of("c"), Some(6));

        let mut shuffled = corpus.clone();
        shuffled.reverse();
        assert_eq!(Vocabulary::build(&shuffled, 1).unwrap(), vocab);
    }

    #[test]
    fn encode_wraps_with_bos_eos_and_maps_oov_to_unk() {
        let corpus = vec![caption("a a a a a", Language::English)];
        let vocab = Vocabulary::build(&corpus, 5).unwrap();
        let cap = caption("a zzz", Language::English);
        assert_eq!(vocab.encode(&cap), vec![BOS_ID, 4, UNK_ID, EOS_ID]);

        let empty = caption("", Language::English);
        assert_eq!(vocab.encode(&empty), vec![BOS_ID, EOS_ID]);
    }

    #[test]
    fn decode_round_trips_in_vocab_captions() {
        let corpus = vec![caption("a man jumps", Language::English)];
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        let cap = caption("man jumps", Language::English);
        let decoded = vocab.decode_ids(&vocab.encode(&cap)).unwrap();
        assert_eq!(decoded, cap.tokens);
        assert_eq!(
            vocab.decode_ids(&[BOS_ID, EOS_ID]).unwrap(),
            Vec::<String>::new()
        );
    }

    #[test]
    fn decode_out_of_range_errors() {
        let corpus = vec![caption("a", Language::English)];
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        let bad = vocab.len();
        assert!(matches!(
            vocab.decode_ids(&[bad]),
            Err(Error::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn vocab_json_round_trip() {
        let corpus = vec![caption("a man jumps high", Language::English)];
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        let restored = Vocabulary::from_json(&vocab.to_json()).unwrap();
        assert_eq!(restored, vocab);
    }
}
