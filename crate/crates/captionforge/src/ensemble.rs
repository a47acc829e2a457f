//! Per-step fusion of token distributions from several models: the Average
//! and Weighted ensembles. Fusion operates on probabilities by default;
//! log-space (geometric) fusion is available behind a flag.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::decode::{beam_search, Decoded, StepModel};
use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Convex combination of probabilities ("average method").
    #[default]
    Probability,
    /// Weighted sum of log-probabilities, renormalized (geometric mean).
    Log,
}

/// Member weights of an ensemble; uniform weights reproduce the Average
/// Ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn uniform(members: usize) -> Result<Self> {
        if members == 0 {
            return Err(Error::InvalidInput("ensemble needs at least one member".into()));
        }
        Ok(EnsembleWeights(vec![1.0 / members as f64; members]))
    }

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("ensemble needs at least one member".into()));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "ensemble weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "ensemble weights must sum to 1, got {sum}"
            )));
        }
        Ok(EnsembleWeights(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Convex combination of per-member probability vectors, renormalized to
/// sum exactly 1.
pub fn fuse_step(distributions: &[Array1<f64>], weights: &EnsembleWeights) -> Result<Array1<f64>> {
    if distributions.len() != weights.len() {
        return Err(Error::MismatchedVocab(format!(
            "{} distributions for {} weights",
            distributions.len(),
            weights.len()
        )));
    }
    let vocab = distributions[0].len();
    for dist in distributions {
        if dist.len() != vocab {
            return Err(Error::MismatchedVocab(format!(
                "distribution lengths differ: {} vs {}",
                dist.len(),
                vocab
            )));
        }
        let sum = dist.sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL || dist.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidInput(format!(
                "fuse_step input is not a probability vector (sum {sum})"
            )));
        }
    }
    // A convex combination of identical vectors is that vector; returning it
    // unchanged keeps single-member and k-copies ensembles exact.
    if distributions.iter().all(|d| d == &distributions[0]) {
        return Ok(distributions[0].clone());
    }
    let mut fused = Array1::zeros(vocab);
    for (dist, &w) in distributions.iter().zip(weights.as_slice()) {
        fused += &(dist * w);
    }
    let total = fused.sum();
    Ok(fused / total)
}

/// Several step models sharing one vocabulary, fused per step. Each member
/// carries its own decoder state inside every hypothesis.
pub struct EnsembleModel<M: StepModel> {
    members: Vec<M>,
    weights: EnsembleWeights,
    mode: FusionMode,
}

impl<M: StepModel> EnsembleModel<M> {
    pub fn new(members: Vec<M>, weights: EnsembleWeights, mode: FusionMode) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("ensemble needs at least one member".into()));
        }
        if members.len() != weights.len() {
            return Err(Error::MismatchedVocab(format!(
                "{} members for {} weights",
                members.len(),
                weights.len()
            )));
        }
        let vocab = members[0].vocab_size();
        if members.iter().any(|m| m.vocab_size() != vocab) {
            return Err(Error::MismatchedVocab(
                "ensemble members must share one vocabulary".into(),
            ));
        }
        Ok(EnsembleModel {
            members,
            weights,
            mode,
        })
    }
}

impl<M: StepModel> StepModel for EnsembleModel<M> {
    type State = Vec<M::State>;

    fn start(&self) -> Self::State {
        self.members.iter().map(|m| m.start()).collect()
    }

    fn step(&self, state: &Self::State, prev_token: usize) -> Result<(Array1<f64>, Self::State)> {
        let mut log_probs = Vec::with_capacity(self.members.len());
        let mut new_states = Vec::with_capacity(self.members.len());
        for (member, member_state) in self.members.iter().zip(state) {
            let (lp, ns) = member.step(member_state, prev_token)?;
            log_probs.push(lp);
            new_states.push(ns);
        }
        if self.members.len() == 1 {
            return Ok((log_probs.pop().unwrap(), new_states));
        }
        // Fusing identical distributions returns them unchanged; doing the
        // same here keeps k-copies ensembles exactly equal to one member.
        if log_probs.iter().all(|lp| lp == &log_probs[0]) {
            return Ok((log_probs.pop().unwrap(), new_states));
        }
        let fused = match self.mode {
            FusionMode::Probability => {
                let probs: Vec<Array1<f64>> =
                    log_probs.iter().map(|lp| lp.mapv(f64::exp)).collect();
                fuse_step(&probs, &self.weights)?.mapv(f64::ln)
            }
            FusionMode::Log => {
                let mut acc: Array1<f64> = Array1::zeros(log_probs[0].len());
                for (lp, &w) in log_probs.iter().zip(self.weights.as_slice()) {
                    if w == 0.0 {
                        continue; // avoid 0 * -inf on masked entries
                    }
                    acc += &lp.mapv(|x| x * w);
                }
                crate::policy::log_softmax(&acc)
            }
        };
        Ok((fused, new_states))
    }

    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size()
    }

    fn eos_id(&self) -> usize {
        self.members[0].eos_id()
    }

    fn bos_id(&self) -> usize {
        self.members[0].bos_id()
    }
}

/// Beam search over the fused distribution.
pub fn ensemble_beam_search<M: StepModel>(
    ensemble: &EnsembleModel<M>,
    beam: usize,
    max_len: usize,
    length_norm: bool,
) -> Result<Vec<Decoded>> {
    beam_search(ensemble, beam, max_len, length_norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: Vec<f64>) -> Array1<f64> {
        Array1::from_vec(v)
    }

    #[test]
    fn identical_distributions_are_a_fixed_point() {
        let d = dist(vec![0.2, 0.3, 0.5]);
        let fused = fuse_step(
            &[d.clone(), d.clone(), d.clone()],
            &EnsembleWeights::uniform(3).unwrap(),
        )
        .unwrap();
        assert_eq!(fused, d);
    }

    #[test]
    fn two_onehots_average_to_half_half() {
        let a = dist(vec![1.0, 0.0]);
        let b = dist(vec![0.0, 1.0]);
        let fused = fuse_step(&[a, b], &EnsembleWeights::new(vec![0.5, 0.5]).unwrap()).unwrap();
        assert!((fused[0] - 0.5).abs() < 1e-15);
        assert!((fused[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_weight_selects_one_member() {
        let a = dist(vec![0.7, 0.3]);
        let b = dist(vec![0.1, 0.9]);
        let fused =
            fuse_step(&[a.clone(), b], &EnsembleWeights::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert!((fused[0] - a[0]).abs() < 1e-15);
        assert!((fused[1] - a[1]).abs() < 1e-15);
    }

    #[test]
    fn fused_output_sums_to_one() {
        let a = dist(vec![0.6, 0.3, 0.1]);
        let b = dist(vec![0.2, 0.2, 0.6]);
        let fused =
            fuse_step(&[a, b], &EnsembleWeights::new(vec![0.25, 0.75]).unwrap()).unwrap();
        assert!((fused.sum() - 1.0).abs() <= 1e-12);
        assert!(fused.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn permutation_equivariance() {
        let a = dist(vec![0.6, 0.4]);
        let b = dist(vec![0.1, 0.9]);
        let w = EnsembleWeights::new(vec![0.3, 0.7]).unwrap();
        let w_swapped = EnsembleWeights::new(vec![0.7, 0.3]).unwrap();
        let f1 = fuse_step(&[a.clone(), b.clone()], &w).unwrap();
        let f2 = fuse_step(&[b, a], &w_swapped).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn mismatched_lengths_error() {
        let a = dist(vec![0.5, 0.5]);
        let b = dist(vec![0.3, 0.3, 0.4]);
        assert!(matches!(
            fuse_step(&[a, b], &EnsembleWeights::uniform(2).unwrap()),
            Err(Error::MismatchedVocab(_))
        ));
    }

    #[test]
    fn invalid_weights_rejected() {
        assert!(EnsembleWeights::new(vec![0.5, 0.6]).is_err());
        assert!(EnsembleWeights::new(vec![-0.5, 1.5]).is_err());
        assert!(EnsembleWeights::new(vec![]).is_err());
    }
}
