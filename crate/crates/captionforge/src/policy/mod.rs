//! The desk-scale captioning policy and its two training phases.

pub mod model;
pub mod optim;
pub mod train;

pub use model::{
    backward_sequence, forward_sequence, label_smoothed_xent, log_softmax, reinforce_grad,
    softmax, PolicyDims, PolicyGrads, PolicyParams, SequenceTrace,
};
pub use optim::{adam_update, lr_schedule, AdamState};
pub use train::{
    greedy_rollout, mean_greedy_reward, sample_rollout, train_scst, train_xent, xent_loss,
    Rollout, Schedule, ScstItem, TrainConfig, XentExample,
};
