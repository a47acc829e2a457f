//! The toy autoregressive captioning policy: a single-layer additive
//! recurrence with a softmax output head and hand-written gradients. It
//! stands in for the full captioning architectures so that the reward,
//! decoding, and ensemble machinery can be exercised end to end.
//!
//! Parameters live in one flat row-major buffer so that the optimizer and
//! finite-difference checks can treat them as a single vector:
//!
//!   token_embed   |V| x d
//!   feature_proj  d_f x d
//!   recur         d x d
//!   out_weight    d x |V|
//!   out_bias      |V|

use ndarray::{Array1, ArrayView2, ArrayViewMut2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub vocab: usize,
    pub hidden: usize,
    pub feature: usize,
}

impl PolicyDims {
    pub fn param_count(&self) -> usize {
        let (v, d, f) = (self.vocab, self.hidden, self.feature);
        v * d + f * d + d * d + d * v + v
    }

    fn offsets(&self) -> [usize; 5] {
        let (v, d, f) = (self.vocab, self.hidden, self.feature);
        let embed = 0;
        let proj = embed + v * d;
        let recur = proj + f * d;
        let out_w = recur + d * d;
        let out_b = out_w + d * v;
        [embed, proj, recur, out_w, out_b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    dims: PolicyDims,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(dims: PolicyDims) -> Self {
        PolicyParams {
            data: vec![0.0; dims.param_count()],
            dims,
        }
    }

    /// Uniform init in [-0.08, 0.08] from a seeded generator.
    pub fn init(dims: PolicyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.param_count())
            .map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        PolicyParams { dims, data }
    }

    pub fn from_flat(dims: PolicyDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "checkpoint holds {} parameters, dims require {}",
                data.len(),
                dims.param_count()
            )));
        }
        Ok(PolicyParams { dims, data })
    }

    pub fn dims(&self) -> PolicyDims {
        self.dims
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn view(&self, idx: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        let off = self.dims.offsets()[idx];
        ArrayView2::from_shape((rows, cols), &self.data[off..off + rows * cols]).unwrap()
    }

    pub fn token_embed(&self) -> ArrayView2<'_, f64> {
        self.view(0, self.dims.vocab, self.dims.hidden)
    }

    pub fn feature_proj(&self) -> ArrayView2<'_, f64> {
        self.view(1, self.dims.feature, self.dims.hidden)
    }

    pub fn recur(&self) -> ArrayView2<'_, f64> {
        self.view(2, self.dims.hidden, self.dims.hidden)
    }

    pub fn out_weight(&self) -> ArrayView2<'_, f64> {
        self.view(3, self.dims.hidden, self.dims.vocab)
    }

    pub fn out_bias(&self) -> &[f64] {
        let off = self.dims.offsets()[4];
        &self.data[off..off + self.dims.vocab]
    }

    pub fn initial_state(&self) -> Array1<f64> {
        Array1::zeros(self.dims.hidden)
    }

    /// One decoder step: new_state = tanh(recur.state + embed[prev] + proj(feature)),
    /// logits = out_weight' . new_state + out_bias.
    pub fn step_logits(
        &self,
        state: &Array1<f64>,
        prev_token: usize,
        feature: &Array1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let dims = self.dims;
        if state.len() != dims.hidden {
            return Err(Error::DimensionMismatch(format!(
                "state has length {}, expected {}",
                state.len(),
                dims.hidden
            )));
        }
        if feature.len() != dims.feature {
            return Err(Error::DimensionMismatch(format!(
                "feature has length {}, expected {}",
                feature.len(),
                dims.feature
            )));
        }
        if prev_token >= dims.vocab {
            return Err(Error::IdOutOfRange {
                id: prev_token,
                vocab_size: dims.vocab,
            });
        }
        let mut pre = self.recur().dot(state);
        pre += &self.token_embed().row(prev_token);
        pre += &self.feature_proj().t().dot(feature);
        let new_state = pre.mapv(f64::tanh);
        let mut logits = self.out_weight().t().dot(&new_state);
        logits += &Array1::from_iter(self.out_bias().iter().copied());
        Ok((logits, new_state))
    }
}

/// Gradient buffer with the same flat layout as [`PolicyParams`].
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    dims: PolicyDims,
    data: Vec<f64>,
}

impl PolicyGrads {
    pub fn dims(&self) -> PolicyDims {
        self.dims
    }

    pub fn zeros(dims: PolicyDims) -> Self {
        PolicyGrads {
            data: vec![0.0; dims.param_count()],
            dims,
        }
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.data {
            *g *= factor;
        }
    }

    pub fn add(&mut self, other: &PolicyGrads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Scales the gradient so its global norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }

    fn view_mut(&mut self, off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[off..off + rows * cols]).unwrap()
    }
}

/// Cached activations of one teacher-forced (or rolled-out) sequence.
pub struct SequenceTrace {
    pub inputs: Vec<usize>,
    pub feature: Array1<f64>,
    /// states[t] is the state after step t; states are what the output head saw.
    pub states: Vec<Array1<f64>>,
    pub logits: Vec<Array1<f64>>,
}

/// Runs the recurrence over `inputs` (previous-token ids), caching states
/// and logits for the backward pass.
pub fn forward_sequence(
    params: &PolicyParams,
    feature: &Array1<f64>,
    inputs: &[usize],
) -> Result<SequenceTrace> {
    let mut state = params.initial_state();
    let mut states = Vec::with_capacity(inputs.len());
    let mut logits = Vec::with_capacity(inputs.len());
    for &prev in inputs {
        let (step_logits, new_state) = params.step_logits(&state, prev, feature)?;
        states.push(new_state.clone());
        logits.push(step_logits);
        state = new_state;
    }
    Ok(SequenceTrace {
        inputs: inputs.to_vec(),
        feature: feature.clone(),
        states,
        logits,
    })
}

/// Backpropagates per-step logit gradients through the recurrence,
/// accumulating into `grads`.
pub fn backward_sequence(
    params: &PolicyParams,
    trace: &SequenceTrace,
    dlogits: &[Array1<f64>],
    grads: &mut PolicyGrads,
) -> Result<()> {
    if dlogits.len() != trace.inputs.len() {
        return Err(Error::LengthMismatch {
            expected: trace.inputs.len(),
            got: dlogits.len(),
        });
    }
    let dims = params.dims();
    let [off_embed, off_proj, off_recur, off_out_w, off_out_b] = dims.offsets();
    let mut dstate: Array1<f64> = Array1::zeros(dims.hidden);
    for t in (0..trace.inputs.len()).rev() {
        let state_t = &trace.states[t];
        let dl = &dlogits[t];

        // output head
        {
            let mut g_out_w = grads.view_mut(off_out_w, dims.hidden, dims.vocab);
            for (i, &s) in state_t.iter().enumerate() {
                for (j, &d) in dl.iter().enumerate() {
                    g_out_w[(i, j)] += s * d;
                }
            }
        }
        for (j, &d) in dl.iter().enumerate() {
            grads.data[off_out_b + j] += d;
        }
        dstate += &params.out_weight().dot(dl);

        // through tanh
        let dpre: Array1<f64> = dstate
            .iter()
            .zip(state_t.iter())
            .map(|(&ds, &s)| ds * (1.0 - s * s))
            .collect();

        let prev_state: Array1<f64> = if t == 0 {
            params.initial_state()
        } else {
            trace.states[t - 1].clone()
        };
        {
            let mut g_recur = grads.view_mut(off_recur, dims.hidden, dims.hidden);
            for (i, &dp) in dpre.iter().enumerate() {
                for (k, &ps) in prev_state.iter().enumerate() {
                    g_recur[(i, k)] += dp * ps;
                }
            }
        }
        {
            let row = trace.inputs[t];
            let mut g_embed = grads.view_mut(off_embed, dims.vocab, dims.hidden);
            for (k, &dp) in dpre.iter().enumerate() {
                g_embed[(row, k)] += dp;
            }
        }
        {
            let mut g_proj = grads.view_mut(off_proj, dims.feature, dims.hidden);
            for (i, &f) in trace.feature.iter().enumerate() {
                for (k, &dp) in dpre.iter().enumerate() {
                    g_proj[(i, k)] += f * dp;
                }
            }
        }
        dstate = params.recur().t().dot(&dpre);
    }
    Ok(())
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps = logits.mapv(|x| (x - max).exp());
    let sum = exps.sum();
    exps / sum
}

pub fn log_softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let log_sum = logits.mapv(|x| (x - max).exp()).sum().ln();
    logits.mapv(|x| x - max - log_sum)
}

/// Label-smoothed cross-entropy against the target distribution
/// q = (1-eps) * onehot(gold) + eps/|V|. Returns the loss and the gradient
/// with respect to the logits (softmax - q).
pub fn label_smoothed_xent(
    logits: &Array1<f64>,
    gold_id: usize,
    eps: f64,
) -> Result<(f64, Array1<f64>)> {
    let v = logits.len();
    if gold_id >= v {
        return Err(Error::IdOutOfRange {
            id: gold_id,
            vocab_size: v,
        });
    }
    assert!((0.0..1.0).contains(&eps), "label smoothing must be in [0,1)");
    let log_probs = log_softmax(logits);
    let uniform = eps / v as f64;
    let mut loss = 0.0;
    for (i, &lp) in log_probs.iter().enumerate() {
        let q = if i == gold_id { 1.0 - eps + uniform } else { uniform };
        loss -= q * lp;
    }
    let probs = softmax(logits);
    let grad = Array1::from_iter(probs.iter().enumerate().map(|(i, &p)| {
        let q = if i == gold_id { 1.0 - eps + uniform } else { uniform };
        p - q
    }));
    Ok((loss, grad))
}

/// Policy-gradient step gradients: for each step t,
/// advantage * (softmax(logits_t) - onehot(sampled_t)), the gradient of
/// -advantage * log p(sampled sequence) with respect to the logits.
pub fn reinforce_grad(
    logits_sequence: &[Array1<f64>],
    sampled_ids: &[usize],
    advantage: f64,
) -> Result<Vec<Array1<f64>>> {
    if logits_sequence.len() != sampled_ids.len() {
        return Err(Error::LengthMismatch {
            expected: logits_sequence.len(),
            got: sampled_ids.len(),
        });
    }
    let mut out = Vec::with_capacity(sampled_ids.len());
    for (logits, &sampled) in logits_sequence.iter().zip(sampled_ids) {
        if sampled >= logits.len() {
            return Err(Error::IdOutOfRange {
                id: sampled,
                vocab_size: logits.len(),
            });
        }
        let mut grad = softmax(logits) * advantage;
        grad[sampled] -= advantage;
        out.push(grad);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> PolicyDims {
        PolicyDims {
            vocab: 6,
            hidden: 5,
            feature: 3,
        }
    }

    #[test]
    fn zero_params_give_uniform_softmax() {
        let params = PolicyParams::zeros(dims());
        let feature = Array1::from_vec(vec![1.0, -2.0, 0.5]);
        let (logits, _) = params
            .step_logits(&params.initial_state(), 1, &feature)
            .unwrap();
        let probs = softmax(&logits);
        for &p in probs.iter() {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_is_deterministic() {
        let params = PolicyParams::init(dims(), 7);
        let feature = Array1::from_vec(vec![0.3, 0.1, -0.4]);
        let a = params.step_logits(&params.initial_state(), 2, &feature).unwrap();
        let b = params.step_logits(&params.initial_state(), 2, &feature).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let params = PolicyParams::init(dims(), 7);
        let bad_feature = Array1::from_vec(vec![0.3, 0.1]);
        assert!(matches!(
            params.step_logits(&params.initial_state(), 0, &bad_feature),
            Err(Error::DimensionMismatch(_))
        ));
        let feature = Array1::from_vec(vec![0.3, 0.1, -0.4]);
        assert!(params
            .step_logits(&params.initial_state(), 99, &feature)
            .is_err());
    }

    #[test]
    fn softmax_sums_to_one_and_is_positive() {
        let logits = Array1::from_vec(vec![1.0, -300.0, 5.0, 0.0]);
        let p = softmax(&logits);
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn smoothed_target_matches_hand_value() {
        // |V| = 4, gold = 0, eps = 0.1 -> q = [0.925, 0.025, 0.025, 0.025]
        let logits = Array1::from_vec(vec![0.0, 0.0, 0.0, 0.0]);
        let (_, grad) = label_smoothed_xent(&logits, 0, 0.1).unwrap();
        assert!((grad[0] - (0.25 - 0.925)).abs() < 1e-12);
        for i in 1..4 {
            assert!((grad[i] - (0.25 - 0.025)).abs() < 1e-12);
        }
    }

    #[test]
    fn eps_zero_is_plain_cross_entropy() {
        let logits = Array1::from_vec(vec![2.0, -1.0, 0.5]);
        let (loss, _) = label_smoothed_xent(&logits, 1, 0.0).unwrap();
        let expected = -log_softmax(&logits)[1];
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn xent_grad_sums_to_zero() {
        let logits = Array1::from_vec(vec![0.3, -2.0, 1.4, 0.0, 5.0]);
        let (_, grad) = label_smoothed_xent(&logits, 2, 0.1).unwrap();
        assert!(grad.sum().abs() < 1e-12);
    }

    #[test]
    fn loss_is_at_least_target_entropy() {
        let eps = 0.1;
        let v = 5usize;
        let logits = Array1::from_vec(vec![0.9, -1.0, 0.2, 3.0, -0.5]);
        let (loss, _) = label_smoothed_xent(&logits, 3, eps).unwrap();
        let uniform = eps / v as f64;
        let mut entropy = -(1.0 - eps + uniform) * (1.0 - eps + uniform).ln();
        entropy -= (v - 1) as f64 * uniform * uniform.ln();
        assert!(loss >= entropy - 1e-12);
    }

    #[test]
    fn zero_advantage_gives_zero_gradient() {
        let logits = vec![Array1::from_vec(vec![1.0, 2.0, 3.0])];
        let grads = reinforce_grad(&logits, &[2], 0.0).unwrap();
        assert!(grads[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn near_deterministic_policy_has_near_zero_reinforce_grad() {
        let logits = vec![Array1::from_vec(vec![-50.0, 50.0, -50.0])];
        let grads = reinforce_grad(&logits, &[1], 1.0).unwrap();
        assert!(grads[0].iter().all(|&g| g.abs() < 1e-12));
    }

    #[test]
    fn reinforce_length_mismatch_errors() {
        let logits = vec![Array1::from_vec(vec![1.0, 2.0])];
        assert!(matches!(
            reinforce_grad(&logits, &[0, 1], 1.0),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn clip_reduces_large_gradients() {
        let mut grads = PolicyGrads::zeros(dims());
        grads.data[0] = 30.0;
        grads.data[1] = 40.0;
        grads.clip_global_norm(5.0);
        assert!((grads.global_norm() - 5.0).abs() < 1e-12);
    }
}
