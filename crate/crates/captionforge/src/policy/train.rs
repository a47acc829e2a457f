//! Two-phase training: teacher-forced cross-entropy with label smoothing,
//! then self-critical policy-gradient fine-tuning on the hybrid reward.
//! Both phases are pure functions of (data, config.seed).

use ndarray::Array1;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{
    backward_sequence, forward_sequence, label_smoothed_xent, reinforce_grad, softmax,
    PolicyGrads, PolicyParams, SequenceTrace,
};
use super::optim::{adam_update, lr_schedule, AdamState};
use crate::error::{Error, Result};
use crate::metrics::IdfTable;
use crate::reward::{hybrid_reward, HybridWeights};
use crate::text_preprocess::{Caption, Language, Vocabulary, BOS_ID, EOS_ID, PAD_ID};

pub const RL_GRAD_CLIP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lr")]
pub enum Schedule {
    /// min(epoch * 1e-4, 3e-4) then halved every 3 epochs after epoch 6.
    TransformerSchedule,
    Constant(f64),
}

impl Schedule {
    fn lr(&self, epoch: u32) -> f64 {
        match self {
            Schedule::TransformerSchedule => lr_schedule(epoch),
            Schedule::Constant(lr) => *lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub label_smoothing: f64,
    pub xe_epochs: u32,
    pub rl_epochs: u32,
    pub seed: u64,
    pub schedule: Schedule,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            label_smoothing: 0.1,
            xe_epochs: 2,
            rl_epochs: 5,
            seed: 0,
            schedule: Schedule::TransformerSchedule,
            max_len: 30,
        }
    }
}

/// One teacher-forcing example: encoded ids are BOS + tokens + EOS.
#[derive(Debug, Clone)]
pub struct XentExample {
    pub id: String,
    pub feature: Array1<f64>,
    pub encoded: Vec<usize>,
}

/// One self-critical item: the feature plus the full reference set used for
/// the reward.
#[derive(Debug, Clone)]
pub struct ScstItem {
    pub id: String,
    pub feature: Array1<f64>,
    pub refs: Vec<Vec<String>>,
    pub language: Language,
}

/// Mean per-token label-smoothed cross-entropy over a set of examples.
pub fn xent_loss(params: &PolicyParams, examples: &[XentExample], eps: f64) -> Result<f64> {
    let mut loss_sum = 0.0;
    let mut token_count = 0usize;
    for ex in examples {
        let inputs = &ex.encoded[..ex.encoded.len() - 1];
        let targets = &ex.encoded[1..];
        let trace = forward_sequence(params, &ex.feature, inputs)?;
        for (logits, &gold) in trace.logits.iter().zip(targets) {
            loss_sum += label_smoothed_xent(logits, gold, eps)?.0;
            token_count += 1;
        }
    }
    Ok(loss_sum / token_count.max(1) as f64)
}

/// Phase one: mini-batch teacher-forced training. Returns the trained
/// parameters and the per-epoch mean loss (measured on the batches as they
/// are consumed, before each update).
pub fn train_xent(
    mut params: PolicyParams,
    examples: &[XentExample],
    config: &TrainConfig,
) -> Result<(PolicyParams, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dims = params.dims();
    let mut adam = AdamState::new(dims);
    let mut curve = Vec::with_capacity(config.xe_epochs as usize);
    for epoch in 1..=config.xe_epochs {
        let lr = config.schedule.lr(epoch);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(config.batch_size.max(1)) {
            let mut grads = PolicyGrads::zeros(dims);
            let mut batch_tokens = 0usize;
            for &idx in batch {
                let ex = &examples[idx];
                let inputs = &ex.encoded[..ex.encoded.len() - 1];
                let targets = &ex.encoded[1..];
                let trace = forward_sequence(&params, &ex.feature, inputs)?;
                let mut dlogits = Vec::with_capacity(targets.len());
                for (logits, &gold) in trace.logits.iter().zip(targets) {
                    let (loss, grad) =
                        label_smoothed_xent(logits, gold, config.label_smoothing)?;
                    epoch_loss += loss;
                    dlogits.push(grad);
                }
                batch_tokens += targets.len();
                backward_sequence(&params, &trace, &dlogits, &mut grads)?;
            }
            epoch_tokens += batch_tokens;
            grads.scale(1.0 / batch_tokens.max(1) as f64);
            adam_update(&mut params, &grads, &mut adam, lr)?;
        }
        curve.push(epoch_loss / epoch_tokens.max(1) as f64);
    }
    Ok((params, curve))
}

/// A finished rollout: generated token ids (terminal EOS included when
/// emitted) plus the cached trace for backpropagation.
pub struct Rollout {
    pub ids: Vec<usize>,
    pub trace: SequenceTrace,
}

impl Rollout {
    /// Generated ids without the terminal EOS.
    pub fn caption_ids(&self) -> &[usize] {
        match self.ids.last() {
            Some(&EOS_ID) => &self.ids[..self.ids.len() - 1],
            _ => &self.ids,
        }
    }
}

fn mask_special(logits: &mut Array1<f64>) {
    logits[PAD_ID] = f64::NEG_INFINITY;
    logits[BOS_ID] = f64::NEG_INFINITY;
}

/// Greedy rollout: argmax each step, ties to the lowest id; PAD and BOS are
/// never generated.
pub fn greedy_rollout(
    params: &PolicyParams,
    feature: &Array1<f64>,
    max_len: usize,
) -> Result<Rollout> {
    rollout(params, feature, max_len, |logits| {
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (i, &v) in logits.iter().enumerate() {
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    })
}

/// Multinomial rollout from the per-step softmax.
pub fn sample_rollout(
    params: &PolicyParams,
    feature: &Array1<f64>,
    max_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    rollout(params, feature, max_len, |logits| {
        let probs = softmax(logits);
        let dist =
            WeightedIndex::new(probs.iter().copied()).expect("softmax produces valid weights");
        dist.sample(rng)
    })
}

fn rollout<F>(
    params: &PolicyParams,
    feature: &Array1<f64>,
    max_len: usize,
    mut pick: F,
) -> Result<Rollout>
where
    F: FnMut(&Array1<f64>) -> usize,
{
    let mut state = params.initial_state();
    let mut prev = BOS_ID;
    let mut inputs = Vec::new();
    let mut states = Vec::new();
    let mut all_logits = Vec::new();
    let mut ids = Vec::new();
    loop {
        let (mut logits, new_state) = params.step_logits(&state, prev, feature)?;
        mask_special(&mut logits);
        let choice = pick(&logits);
        inputs.push(prev);
        states.push(new_state.clone());
        all_logits.push(logits);
        ids.push(choice);
        if choice == EOS_ID || ids.len() >= max_len {
            break;
        }
        prev = choice;
        state = new_state;
    }
    Ok(Rollout {
        ids,
        trace: SequenceTrace {
            inputs,
            feature: feature.clone(),
            states,
            logits: all_logits,
        },
    })
}

fn rollout_caption(
    rollout: &Rollout,
    vocab: &Vocabulary,
    item: &ScstItem,
) -> Result<Caption> {
    let tokens = vocab.decode_ids(rollout.caption_ids())?;
    Ok(Caption {
        id: item.id.clone(),
        tokens,
        language: item.language,
    })
}

/// Mean hybrid reward of greedy rollouts over `items`.
pub fn mean_greedy_reward(
    params: &PolicyParams,
    items: &[ScstItem],
    weights: &HybridWeights,
    idf: &IdfTable,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut sum = 0.0;
    for item in items {
        let greedy = greedy_rollout(params, &item.feature, max_len)?;
        let caption = rollout_caption(&greedy, vocab, item)?;
        sum += hybrid_reward(&caption, &item.refs, weights, idf)?;
    }
    Ok(sum / items.len() as f64)
}

/// Phase two: self-critical training. Per sample, draws one multinomial
/// rollout, one greedy rollout, and takes an Adam step on the REINFORCE
/// gradient weighted by the reward difference. Returns the trained
/// parameters and the mean greedy reward observed in each epoch.
pub fn train_scst(
    mut params: PolicyParams,
    items: &[ScstItem],
    weights: &HybridWeights,
    idf: &IdfTable,
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<(PolicyParams, Vec<f64>)> {
    if items.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    weights.validate()?;
    let dims = params.dims();
    let mut adam = AdamState::new(dims);
    let mut curve = Vec::with_capacity(config.rl_epochs as usize);
    for epoch in 1..=config.rl_epochs {
        // Epoch numbering continues after the cross-entropy phase so the
        // schedule keeps decaying.
        let lr = config.schedule.lr(config.xe_epochs + epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(
            config.seed.wrapping_mul(0x9e37_79b9).wrapping_add(epoch as u64),
        );
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);

        let mut reward_sum = 0.0;
        for &idx in &order {
            let item = &items[idx];
            let greedy = greedy_rollout(&params, &item.feature, config.max_len)?;
            let greedy_caption = rollout_caption(&greedy, vocab, item)?;
            let r_greedy = hybrid_reward(&greedy_caption, &item.refs, weights, idf)?;
            reward_sum += r_greedy;

            let sampled = sample_rollout(&params, &item.feature, config.max_len, &mut rng)?;
            let sampled_caption = rollout_caption(&sampled, vocab, item)?;
            let r_sampled = hybrid_reward(&sampled_caption, &item.refs, weights, idf)?;
            let advantage = r_sampled - r_greedy;
            if advantage == 0.0 {
                continue;
            }
            let dlogits = reinforce_grad(&sampled.trace.logits, &sampled.ids, advantage)?;
            let mut grads = PolicyGrads::zeros(dims);
            backward_sequence(&params, &sampled.trace, &dlogits, &mut grads)?;
            grads.clip_global_norm(RL_GRAD_CLIP);
            adam_update(&mut params, &grads, &mut adam, lr)?;
        }
        curve.push(reward_sum / items.len() as f64);
    }
    Ok((params, curve))
}
