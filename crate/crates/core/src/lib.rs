//! LSTM-CTC acoustic modelling with interchangeable projection heads.
//!
//! The crate is layered bottom-up:
//!
//! - [`numerics`]: dense tensors, a named parameter store and a reverse-mode
//!   gradient tape.
//! - [`frontend`]: feature files, deltas, per-speaker CMVN, splicing, frame
//!   skipping and a synthetic corpus generator.
//! - [`encoder`]: stacked bidirectional peephole LSTM.
//! - [`heads`]: single-matrix, mixture-of-matrices and high-rank projection
//!   heads.
//! - [`ctc`]: CTC loss, its brute-force oracle and the label prior.
//! - [`decode`]: prior normalization, greedy and prefix-beam decoding, token
//!   error rate.
//! - [`model`] and [`train`]: the assembled acoustic model, Adam, learning-rate
//!   schedule, checkpoints and the training loop.

pub mod ctc;
pub mod decode;
pub mod encoder;
mod error;
pub mod frontend;
pub mod heads;
pub mod model;
pub mod numerics;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use frontend::{FeatureSequence, LabelSequence, TokenTable};
pub use heads::{Head, HeadKind};
pub use model::{AcousticModel, ModelConfig};
pub use numerics::{ParamStore, Tape, Tensor, Var};

/// Reserved id of the CTC blank label.
pub const BLANK: usize = 0;
