//! captionforge: multilingual caption evaluation metrics, hybrid-reward
//! self-critical training, and ensemble decoding at desk scale.
//!
//! The crate mirrors the pipeline of a captioning challenge submission:
//! preprocessing and vocabulary building, the four challenge metrics
//! (CIDEr, BLEU, METEOR, ROUGE-L), a hybrid linear-combination reward and
//! its self-critical advantage, a toy autoregressive policy with
//! hand-written gradients, greedy/sampling/beam decoders, and per-step
//! probability fusion across model ensembles.

pub mod decode;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod metrics;
pub mod policy;
pub mod reward;
pub mod text_preprocess;

pub use error::{Error, Result};
