//! Greedy, sampling, and beam-search decoding over any per-step model.
//!
//! A [`StepModel`] exposes one autoregressive step: given a decoder state
//! and the previous token it returns the log-probabilities of the next
//! token. The toy policy and the ensemble both implement it, so every
//! decoder here works for either.

use ndarray::Array1;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::policy::{log_softmax, PolicyParams};
use crate::text_preprocess::{BOS_ID, EOS_ID, PAD_ID};

pub const DEFAULT_BEAM: usize = 3;
pub const DEFAULT_MAX_LEN: usize = 30;

/// One autoregressive step of a decodable model.
pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Self::State;
    /// Log-probabilities of the next token given the state and previous
    /// token id. Entries may be -inf for tokens the model never emits.
    fn step(&self, state: &Self::State, prev_token: usize) -> Result<(Array1<f64>, Self::State)>;
    fn vocab_size(&self) -> usize;
    fn eos_id(&self) -> usize {
        EOS_ID
    }
    fn bos_id(&self) -> usize {
        BOS_ID
    }
}

/// The toy policy bound to one input feature vector. PAD and BOS are masked
/// out of the emission distribution.
pub struct PolicyStepper<'a> {
    pub params: &'a PolicyParams,
    pub feature: Array1<f64>,
}

impl StepModel for PolicyStepper<'_> {
    type State = Array1<f64>;

    fn start(&self) -> Self::State {
        self.params.initial_state()
    }

    fn step(&self, state: &Self::State, prev_token: usize) -> Result<(Array1<f64>, Self::State)> {
        let (mut logits, new_state) = self.params.step_logits(state, prev_token, &self.feature)?;
        logits[PAD_ID] = f64::NEG_INFINITY;
        logits[BOS_ID] = f64::NEG_INFINITY;
        Ok((log_softmax(&logits), new_state))
    }

    fn vocab_size(&self) -> usize {
        self.params.dims().vocab
    }
}

/// A decoded hypothesis: generated ids (terminal EOS excluded) and the
/// cumulative log-probability of the full sequence including the EOS step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub ids: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Decoded {
    /// Ranking score: log-prob divided by the number of generated steps
    /// (EOS included) when length normalization is on.
    pub fn score(&self, length_norm: bool) -> f64 {
        if length_norm {
            let steps = self.ids.len() + usize::from(self.finished);
            self.log_prob / steps.max(1) as f64
        } else {
            self.log_prob
        }
    }
}

/// Argmax decoding, ties broken by lowest token id.
pub fn greedy_decode<M: StepModel>(model: &M, max_len: usize) -> Result<Decoded> {
    let mut state = model.start();
    let mut prev = model.bos_id();
    let mut ids = Vec::new();
    let mut log_prob = 0.0;
    let mut finished = false;
    while ids.len() < max_len {
        let (log_probs, new_state) = model.step(&state, prev)?;
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (i, &v) in log_probs.iter().enumerate() {
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        log_prob += best_val;
        if best == model.eos_id() {
            finished = true;
            break;
        }
        ids.push(best);
        prev = best;
        state = new_state;
    }
    Ok(Decoded {
        ids,
        log_prob,
        finished,
    })
}

/// Seeded multinomial decoding from softmax(log_probs / temperature).
pub fn sample_decode<M: StepModel>(
    model: &M,
    max_len: usize,
    seed: u64,
    temperature: f64,
) -> Result<Decoded> {
    assert!(temperature > 0.0, "temperature must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = model.start();
    let mut prev = model.bos_id();
    let mut ids = Vec::new();
    let mut log_prob = 0.0;
    let mut finished = false;
    while ids.len() < max_len {
        let (log_probs, new_state) = model.step(&state, prev)?;
        let scaled = log_softmax(&log_probs.mapv(|lp| lp / temperature));
        let weights: Vec<f64> = scaled.iter().map(|&lp| lp.exp()).collect();
        let dist = WeightedIndex::new(&weights).expect("distribution has positive mass");
        let choice = dist.sample(&mut rng);
        log_prob += log_probs[choice];
        if choice == model.eos_id() {
            finished = true;
            break;
        }
        ids.push(choice);
        prev = choice;
        state = new_state;
    }
    Ok(Decoded {
        ids,
        log_prob,
        finished,
    })
}

struct Hypothesis<S> {
    ids: Vec<usize>,
    log_prob: f64,
    state: S,
}

/// Standard beam search. Each step every live hypothesis is extended over
/// the vocabulary and the top `beam` by cumulative log-probability survive
/// (ties by lowest token id). Hypotheses that emit EOS retire into the
/// completed pool; the final ranking covers completed and still-live
/// hypotheses, by length-normalized log-prob when `length_norm` is set.
pub fn beam_search<M: StepModel>(
    model: &M,
    beam: usize,
    max_len: usize,
    length_norm: bool,
) -> Result<Vec<Decoded>> {
    assert!(beam >= 1, "beam must be at least 1");
    let mut live = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        state: model.start(),
    }];
    let mut completed: Vec<Decoded> = Vec::new();

    for _ in 0..max_len {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new(); // (log_prob, hyp idx, token)
        let mut stepped: Vec<(Array1<f64>, M::State)> = Vec::with_capacity(live.len());
        for (h, hyp) in live.iter().enumerate() {
            let prev = *hyp.ids.last().unwrap_or(&model.bos_id());
            let (log_probs, new_state) = model.step(&hyp.state, prev)?;
            for (tok, &lp) in log_probs.iter().enumerate() {
                if lp > f64::NEG_INFINITY {
                    candidates.push((hyp.log_prob + lp, h, tok));
                }
            }
            stepped.push((log_probs, new_state));
        }
        // Highest cumulative log-prob first; ties by hypothesis then token id.
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut next_live = Vec::with_capacity(beam);
        for &(log_prob, h, tok) in candidates.iter() {
            if next_live.len() >= beam {
                break;
            }
            if tok == model.eos_id() {
                completed.push(Decoded {
                    ids: live[h].ids.clone(),
                    log_prob,
                    finished: true,
                });
                // A finished hypothesis occupies a beam slot this step but
                // is never extended.
                next_live.push(None);
            } else {
                let mut ids = live[h].ids.clone();
                ids.push(tok);
                next_live.push(Some(Hypothesis {
                    ids,
                    log_prob,
                    state: stepped[h].1.clone(),
                }));
            }
        }
        live = next_live.into_iter().flatten().collect();
        if live.is_empty() {
            break;
        }
    }

    let mut results = completed;
    results.extend(live.into_iter().map(|h| Decoded {
        ids: h.ids,
        log_prob: h.log_prob,
        finished: false,
    }));
    results.sort_by(|a, b| {
        b.score(length_norm)
            .partial_cmp(&a.score(length_norm))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.ids.cmp(&b.ids))
    });
    Ok(results)
}
