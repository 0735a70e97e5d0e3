//! Data preparation, the training loop and evaluation.

mod adam;
mod batch;
mod checkpoint;
mod config;
mod experiment;
mod schedule;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{clip_global_norm, Adam};
pub use batch::{batch_loss_and_grads, pad_batch, Example, PaddedBatch};
pub use checkpoint::Checkpoint;
pub use config::{parse_config_pairs, read_config_pairs, Preset, TrainConfig};
pub use experiment::{compare_heads, HeadComparison};
pub use schedule::lr_schedule;

use crate::ctc::{ctc_loss, label_prior, min_frames};
use crate::decode::{decode_posteriorgram, Posteriorgram, ScoreReport, Scored};
use crate::error::{Error, Result};
use crate::frontend::{FeatureSequence, FrontendConfig, LabelSequence};
use crate::model::AcousticModel;
use crate::numerics::{log_softmax_rows, ParamStore};

pub const METRICS_FILE: &str = "metrics.log";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_ter: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

impl fmt::Display for EpochMetrics {
    /// `epoch train_loss val_loss val_ter lr`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:.6} {:.6} {:.6} {:.6e}",
            self.epoch, self.train_loss, self.val_loss, self.val_ter, self.lr
        )
    }
}

/// Utterances that could not be turned into training examples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Skipped {
    pub unlabelled: usize,
    pub infeasible: usize,
}

/// Run the front end over `feats` and pair each utterance with its labels.
///
/// Utterances without labels, or too short after frame skipping to carry
/// their label sequence, are skipped with a warning.
pub fn build_examples(
    feats: &[FeatureSequence],
    labels: &[LabelSequence],
    frontend: &FrontendConfig,
) -> Result<(Vec<Example>, Skipped)> {
    let mut by_id: BTreeMap<&str, &[usize]> = BTreeMap::new();
    for l in labels {
        if by_id.insert(&l.utterance_id, &l.tokens).is_some() {
            return Err(Error::DuplicateUtterance(l.utterance_id.clone()));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for f in feats {
        if !seen.insert(f.utterance_id.as_str()) {
            return Err(Error::DuplicateUtterance(f.utterance_id.clone()));
        }
    }
    let processed = frontend.apply(feats)?;
    let mut skipped = Skipped::default();
    let mut out = Vec::with_capacity(processed.len());
    for seq in processed {
        let Some(tokens) = by_id.get(seq.utterance_id.as_str()) else {
            log::warn!("{}: no labels, skipped", seq.utterance_id);
            skipped.unlabelled += 1;
            continue;
        };
        let needed = min_frames(tokens);
        if seq.num_frames() < needed {
            log::warn!(
                "{}: {} frames cannot carry {} labels, skipped",
                seq.utterance_id,
                seq.num_frames(),
                tokens.len()
            );
            skipped.infeasible += 1;
            continue;
        }
        out.push(Example {
            utterance_id: seq.utterance_id,
            frames: seq.frames,
            tokens: tokens.to_vec(),
        });
    }
    Ok((out, skipped))
}

/// Largest label id in use.
pub fn infer_num_labels(labels: &[LabelSequence]) -> usize {
    labels
        .iter()
        .flat_map(|l| l.tokens.iter().copied())
        .max()
        .unwrap_or(0)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Deterministic split by a hash of the utterance id. A positive fraction
/// always yields at least one validation utterance when two or more exist.
pub fn split_validation(examples: Vec<Example>, fraction: f64) -> (Vec<Example>, Vec<Example>) {
    const SCALE: u64 = 1 << 20;
    let cut = (fraction * SCALE as f64) as u64;
    let (mut train, mut val): (Vec<_>, Vec<_>) = examples
        .into_iter()
        .partition(|e| fnv1a(&e.utterance_id) % SCALE >= cut);
    if fraction > 0.0 && val.is_empty() && train.len() >= 2 {
        let i = (0..train.len())
            .min_by_key(|&i| fnv1a(&train[i].utterance_id) % SCALE)
            .unwrap_or(0);
        val.push(train.remove(i));
    }
    (train, val)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub report: ScoreReport,
    pub hypotheses: Vec<(String, Vec<usize>)>,
}

impl Evaluation {
    pub fn ter(&self) -> f64 {
        self.report.ter()
    }
}

/// Mean CTC loss and decoded token error rate over `examples`.
pub fn evaluate(
    model: &AcousticModel,
    params: &ParamStore,
    prior: &[f64],
    alpha: f64,
    beam_width: usize,
    examples: &[Example],
) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut scored = Vec::with_capacity(examples.len());
    let mut hypotheses = Vec::with_capacity(examples.len());
    for e in examples {
        let logits = model.logits(params, &e.frames)?;
        loss += ctc_loss(&logits, &e.tokens)?.loss;
        let pg = Posteriorgram {
            utterance_id: e.utterance_id.clone(),
            log_post: log_softmax_rows(&logits),
        };
        let hyp = decode_posteriorgram(&pg, prior, alpha, beam_width)?;
        hypotheses.push((e.utterance_id.clone(), hyp.tokens.clone()));
        scored.push(Scored {
            utterance_id: e.utterance_id.clone(),
            reference: e.tokens.clone(),
            hypothesis: hyp.tokens,
        });
    }
    Ok(Evaluation {
        mean_loss: loss / examples.len().max(1) as f64,
        report: ScoreReport::new(&scored)?,
        hypotheses,
    })
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub model: AcousticModel,
    pub input_dim: usize,
    pub num_labels: usize,
    pub params: ParamStore,
    pub adam: Adam,
    pub prior: Vec<f64>,
    pub history: Vec<EpochMetrics>,
    /// Completed epochs.
    pub epoch: usize,
    /// Rate for the next epoch.
    pub lr: f64,
    pub best_params: ParamStore,
}

impl Trainer {
    /// Fresh model; the label prior is estimated from `train`.
    pub fn new(config: TrainConfig, input_dim: usize, num_labels: usize, train: &[Example]) -> Result<Self> {
        config.validate()?;
        let model = AcousticModel::new(&config.model_config(input_dim, num_labels))?;
        let params = model.init_params(config.seed)?;
        let prior = label_prior(train.iter().map(|e| e.tokens.as_slice()), num_labels)?;
        Ok(Trainer {
            adam: Adam::new(&params),
            best_params: params.clone(),
            lr: config.lr,
            config,
            model,
            input_dim,
            num_labels,
            params,
            prior,
            history: Vec::new(),
            epoch: 0,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let model = AcousticModel::new(&ckpt.config.model_config(ckpt.input_dim, ckpt.num_labels))?;
        let fresh = model.init_params(0)?;
        let layout_ok = fresh.len() == ckpt.params.len()
            && fresh
                .iter()
                .zip(ckpt.params.iter())
                .all(|((a, ta), (b, tb))| a == b && ta.shape() == tb.shape());
        if !layout_ok {
            return Err(Error::Checkpoint("parameters do not match the stored model config".into()));
        }
        Ok(Trainer {
            config: ckpt.config,
            model,
            input_dim: ckpt.input_dim,
            num_labels: ckpt.num_labels,
            best_params: ckpt.params.clone(),
            params: ckpt.params,
            adam: ckpt.adam,
            prior: ckpt.prior,
            history: ckpt.history,
            epoch: ckpt.epoch,
            lr: ckpt.lr,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_with(&self.params)
    }

    fn checkpoint_with(&self, params: &ParamStore) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            input_dim: self.input_dim,
            num_labels: self.num_labels,
            epoch: self.epoch,
            lr: self.lr,
            history: self.history.clone(),
            prior: self.prior.clone(),
            params: params.clone(),
            adam: self.adam.clone(),
        }
    }

    pub fn best_val_loss(&self) -> f64 {
        self.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min)
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.config.max_epochs || self.lr < self.config.min_lr
    }

    /// One pass over `train` in an order fixed by `(seed, epoch)`, then
    /// validation. An empty `val` validates on `train`.
    pub fn run_epoch(&mut self, train: &[Example], val: &[Example]) -> Result<EpochMetrics> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("no training examples".into()));
        }
        let epoch = self.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let lr = self.lr;
        let mut total = 0.0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let members: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = pad_batch(&members)?;
            let diverged = |loss| Error::Diverged {
                epoch,
                batch: b + 1,
                loss,
            };
            let (loss, mut grads) = match batch_loss_and_grads(&self.model, &self.params, &batch) {
                Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN)),
                r => r?,
            };
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            if let Some(c) = self.config.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            self.adam.step(&mut self.params, &grads, lr)?;
            total += loss * members.len() as f64;
        }
        let eval_set = if val.is_empty() { train } else { val };
        let ev = evaluate(
            &self.model,
            &self.params,
            &self.prior,
            self.config.prior_alpha,
            self.config.beam_width,
            eval_set,
        )?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: total / train.len() as f64,
            val_loss: ev.mean_loss,
            val_ter: ev.ter(),
            lr,
        };
        if metrics.val_loss < self.best_val_loss() {
            self.best_params = self.params.clone();
        }
        self.history.push(metrics);
        self.epoch = epoch;
        let vals: Vec<f64> = self.history.iter().map(|h| h.val_loss).collect();
        self.lr = lr_schedule(&vals, self.config.lr, self.config.lr_decay, self.config.patience);
        log::info!("{metrics}");
        Ok(metrics)
    }

    /// Train until [`Trainer::finished`]. With `out_dir`, the metrics log is
    /// rewritten from history and extended each epoch, and `last.ckpt` /
    /// `best.ckpt` are kept up to date.
    pub fn fit(&mut self, train: &[Example], val: &[Example], out_dir: Option<&Path>) -> Result<()> {
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let metrics: String = self.history.iter().map(|h| format!("{h}\n")).collect();
            let path = dir.join(METRICS_FILE);
            std::fs::write(&path, metrics).map_err(|e| Error::io(&path, e))?;
            if self.history.is_empty() {
                self.checkpoint().save(dir.join(LAST_CHECKPOINT))?;
                self.checkpoint().save(dir.join(BEST_CHECKPOINT))?;
            } else if let Ok(best) = Checkpoint::load(dir.join(BEST_CHECKPOINT)) {
                self.best_params = best.params;
            }
        }
        while !self.finished() {
            let before = self.best_val_loss();
            let m = self.run_epoch(train, val)?;
            if let Some(dir) = out_dir {
                let path = dir.join(METRICS_FILE);
                let mut f = OpenOptions::new()
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                writeln!(f, "{m}").map_err(|e| Error::io(&path, e))?;
                self.checkpoint().save(dir.join(LAST_CHECKPOINT))?;
                if m.val_loss < before {
                    self.checkpoint().save(dir.join(BEST_CHECKPOINT))?;
                }
            }
        }
        Ok(())
    }

    /// Checkpoint holding the best-validation parameters.
    pub fn best_checkpoint(&self) -> Checkpoint {
        self.checkpoint_with(&self.best_params)
    }
}
