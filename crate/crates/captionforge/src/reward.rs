//! The hybrid reward: a nonnegative linear combination of sentence-level
//! metric scores, and the self-critical advantage built on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bleu_sentence, cider_d, meteor_lite, rouge_l, IdfTable};
use crate::text_preprocess::Caption;

/// Coefficients of the linear reward combination. All weights must be
/// nonnegative and at least one positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridWeights {
    pub cider: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
}

impl Default for HybridWeights {
    /// Toolkit defaults; configurable, not a published value.
    fn default() -> Self {
        HybridWeights {
            cider: 1.0,
            bleu4: 0.5,
            meteor: 1.0,
            rouge_l: 0.5,
            bleu1: 0.0,
            bleu2: 0.0,
            bleu3: 0.0,
        }
    }
}

impl HybridWeights {
    pub fn cider_only() -> Self {
        HybridWeights {
            cider: 1.0,
            bleu4: 0.0,
            meteor: 0.0,
            rouge_l: 0.0,
            bleu1: 0.0,
            bleu2: 0.0,
            bleu3: 0.0,
        }
    }

    fn all(&self) -> [f64; 7] {
        [
            self.cider,
            self.bleu4,
            self.meteor,
            self.rouge_l,
            self.bleu1,
            self.bleu2,
            self.bleu3,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let weights = self.all();
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "hybrid weights must be finite and nonnegative".into(),
            ));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidInput(
                "at least one hybrid weight must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Upper bound of the reward: CIDEr tops out at 10, the rest at 1.
    pub fn max_reward(&self) -> f64 {
        10.0 * self.cider
            + self.bleu4
            + self.meteor
            + self.rouge_l
            + self.bleu1
            + self.bleu2
            + self.bleu3
    }
}

/// Weighted sum of sentence-level metric scores for one candidate.
pub fn hybrid_reward(
    cand: &Caption,
    refs: &[Vec<String>],
    weights: &HybridWeights,
    idf: &IdfTable,
) -> Result<f64> {
    weights.validate()?;
    let mut reward = 0.0;
    if weights.cider > 0.0 {
        reward += weights.cider * cider_d(&cand.tokens, refs, idf)?;
    }
    for (w, n) in [
        (weights.bleu1, 1),
        (weights.bleu2, 2),
        (weights.bleu3, 3),
        (weights.bleu4, 4),
    ] {
        if w > 0.0 {
            reward += w * bleu_sentence(&cand.tokens, refs, n);
        }
    }
    if weights.meteor > 0.0 {
        reward += weights.meteor * meteor_lite(&cand.tokens, refs, cand.language);
    }
    if weights.rouge_l > 0.0 {
        reward += weights.rouge_l * rouge_l(&cand.tokens, refs);
    }
    Ok(reward)
}

/// Self-critical advantage: reward of the sampled rollout minus reward of
/// the greedy rollout from the same input.
pub fn scst_advantage(
    sampled: &Caption,
    greedy: &Caption,
    refs: &[Vec<String>],
    weights: &HybridWeights,
    idf: &IdfTable,
) -> Result<f64> {
    let r_sampled = hybrid_reward(sampled, refs, weights, idf)?;
    let r_greedy = hybrid_reward(greedy, refs, weights, idf)?;
    Ok(r_sampled - r_greedy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text_preprocess::Language;

    fn caption(raw: &str) -> Caption {
        Caption::new("t", raw, Language::English)
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn test_idf() -> IdfTable {
        IdfTable::build(
            &[
                vec![toks("a man jumps high")],
                vec![toks("the cat sat down")],
                vec![toks("dogs run very fast")],
            ],
            4,
        )
    }

    #[test]
    fn cider_only_weights_match_metric() {
        let idf = test_idf();
        let cand = caption("a man sat down");
        let refs = vec![toks("a man jumps high")];
        let r = hybrid_reward(&cand, &refs, &HybridWeights::cider_only(), &idf).unwrap();
        let c = cider_d(&cand.tokens, &refs, &idf).unwrap();
        assert!((r - c).abs() < 1e-12);
    }

    #[test]
    fn bleu_only_weights_scale_linearly() {
        let idf = test_idf();
        let cand = caption("a man jumps high");
        let refs = vec![toks("a man jumps down")];
        let weights = HybridWeights {
            cider: 0.0,
            bleu4: 2.0,
            meteor: 0.0,
            rouge_l: 0.0,
            ..Default::default()
        };
        let r = hybrid_reward(&cand, &refs, &weights, &idf).unwrap();
        assert!((r - 2.0 * bleu_sentence(&cand.tokens, &refs, 4)).abs() < 1e-12);
    }

    #[test]
    fn doubling_weights_doubles_reward() {
        let idf = test_idf();
        let cand = caption("a man sat");
        let refs = vec![toks("a man jumps high"), toks("the cat sat down")];
        let w = HybridWeights::default();
        let doubled = HybridWeights {
            cider: 2.0 * w.cider,
            bleu4: 2.0 * w.bleu4,
            meteor: 2.0 * w.meteor,
            rouge_l: 2.0 * w.rouge_l,
            bleu1: 2.0 * w.bleu1,
            bleu2: 2.0 * w.bleu2,
            bleu3: 2.0 * w.bleu3,
        };
        let r1 = hybrid_reward(&cand, &refs, &w, &idf).unwrap();
        let r2 = hybrid_reward(&cand, &refs, &doubled, &idf).unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-12);
    }

    #[test]
    fn advantage_is_antisymmetric_and_zero_on_identity() {
        let idf = test_idf();
        let a = caption("a man jumps high");
        let b = caption("the cat");
        let refs = vec![toks("a man jumps high")];
        let w = HybridWeights::default();
        assert_eq!(scst_advantage(&a, &a, &refs, &w, &idf).unwrap(), 0.0);
        let ab = scst_advantage(&a, &b, &refs, &w, &idf).unwrap();
        let ba = scst_advantage(&b, &a, &refs, &w, &idf).unwrap();
        assert_eq!(ab, -ba);
        assert!(ab > 0.0);
    }

    #[test]
    fn invalid_weights_rejected() {
        let zero = HybridWeights {
            cider: 0.0,
            bleu4: 0.0,
            meteor: 0.0,
            rouge_l: 0.0,
            bleu1: 0.0,
            bleu2: 0.0,
            bleu3: 0.0,
        };
        assert!(zero.validate().is_err());
        let negative = HybridWeights {
            cider: -1.0,
            ..Default::default()
        };
        assert!(negative.validate().is_err());
    }
}
