//! Encoder plus projection head, trained with CTC.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctc::ctc_loss;
use crate::encoder::{BiLstmStack, EncoderConfig};
use crate::error::{Error, Result};
use crate::heads::{Head, HeadKind, DEFAULT_LAMBDA};
use crate::numerics::{log_softmax_rows, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadKind,
    /// `K`, non-blank labels.
    pub num_labels: usize,
    /// `n`; `None` means `K + 1`.
    pub components: Option<usize>,
    pub lambda: f64,
}

impl ModelConfig {
    pub fn new(input_dim: usize, num_labels: usize, head: HeadKind) -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                input_dim,
                ..EncoderConfig::default()
            },
            head,
            num_labels,
            components: None,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_labels + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcousticModel {
    pub encoder: BiLstmStack,
    pub head: Head,
}

impl AcousticModel {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        if cfg.encoder.layers == 0 || cfg.encoder.hidden == 0 || cfg.encoder.input_dim == 0 {
            return Err(Error::InvalidArgument("encoder dimensions must be positive".into()));
        }
        let n_cls = cfg.num_classes();
        let head = Head::new(
            cfg.head,
            cfg.encoder.output_dim(),
            n_cls,
            cfg.components.unwrap_or(n_cls),
            cfg.lambda,
        )?;
        Ok(AcousticModel {
            encoder: BiLstmStack::new(cfg.encoder),
            head,
        })
    }

    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        self.encoder.init_params(&mut params, &mut rng)?;
        self.head.init_params(&mut params, &mut rng)?;
        Ok(params)
    }

    /// Logits for one utterance, recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, frames: &Tensor) -> Result<Var> {
        let x = tape.constant(frames.clone())?;
        let h = self.encoder.forward(tape, params, x)?;
        self.head.forward(tape, params, h)
    }

    pub fn logits(&self, params: &ParamStore, frames: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let l = self.forward(&mut tape, params, frames)?;
        Ok(tape.value(l).clone())
    }

    /// Per-frame log posteriors over `K + 1` labels.
    pub fn log_posteriors(&self, params: &ParamStore, frames: &Tensor) -> Result<Tensor> {
        Ok(log_softmax_rows(&self.logits(params, frames)?))
    }

    /// CTC loss of one utterance and its gradient for every parameter.
    pub fn loss_and_grads(
        &self,
        params: &ParamStore,
        frames: &Tensor,
        tokens: &[usize],
    ) -> Result<(f64, ParamStore)> {
        let mut tape = Tape::new();
        let logits = self.forward(&mut tape, params, frames)?;
        let ctc = ctc_loss(tape.value(logits), tokens)?;
        let loss = tape.external_scalar(logits, ctc.loss, ctc.grad_logits)?;
        let grads = tape.backward(loss, params)?;
        Ok((ctc.loss, grads))
    }

    pub fn loss(&self, params: &ParamStore, frames: &Tensor, tokens: &[usize]) -> Result<f64> {
        Ok(ctc_loss(&self.logits(params, frames)?, tokens)?.loss)
    }
}
