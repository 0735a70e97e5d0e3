//! Training configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::heads::{HeadKind, DEFAULT_LAMBDA};
use crate::model::ModelConfig;

/// Optimizer presets for the two reference corpora.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Wsj,
    Librispeech,
}

impl Preset {
    /// `(learning rate, decay factor, batch size)`.
    pub fn values(self) -> (f64, f64, usize) {
        match self {
            Preset::Wsj => (0.001, 0.7, 32),
            Preset::Librispeech => (0.0004, 0.5, 64),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wsj" => Ok(Preset::Wsj),
            "librispeech" => Ok(Preset::Librispeech),
            _ => Err(Error::Config(format!("unknown preset `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub head: HeadKind,
    /// Mixture components `n`; `None` means `K + 1`.
    pub components: Option<usize>,
    pub lambda: f64,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without strict validation improvement before each decay.
    pub patience: usize,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub val_fraction: f64,
    pub prior_alpha: f64,
    /// 1 decodes with best path; wider beams use prefix search.
    pub beam_width: usize,
    pub frontend: FrontendConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let (lr, lr_decay, batch_size) = Preset::Wsj.values();
        TrainConfig {
            head: HeadKind::HighRank,
            components: None,
            lambda: DEFAULT_LAMBDA,
            layers: 4,
            hidden: 320,
            lr,
            lr_decay,
            batch_size,
            max_epochs: 20,
            patience: 1,
            min_lr: 1e-6,
            clip_norm: None,
            seed: 1,
            val_fraction: 0.05,
            prior_alpha: 1.0,
            beam_width: 1,
            frontend: FrontendConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value `{value}` for `{key}`"))),
    }
}

impl TrainConfig {
    pub fn apply_preset(&mut self, preset: Preset) {
        (self.lr, self.lr_decay, self.batch_size) = preset.values();
    }

    /// Set one key. `preset` overwrites lr, decay and batch size.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "preset" => self.apply_preset(v.parse()?),
            "head" => self.head = v.parse()?,
            "components" => {
                self.components = match v {
                    "auto" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "lambda" => self.lambda = parse_num(key, v)?,
            "layers" => self.layers = parse_num(key, v)?,
            "hidden" => self.hidden = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "lr_decay" => self.lr_decay = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "max_epochs" => self.max_epochs = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "min_lr" => self.min_lr = parse_num(key, v)?,
            "clip_norm" => {
                self.clip_norm = match v {
                    "off" | "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "seed" => self.seed = parse_num(key, v)?,
            "val_fraction" => self.val_fraction = parse_num(key, v)?,
            "prior_alpha" => self.prior_alpha = parse_num(key, v)?,
            "beam_width" => self.beam_width = parse_num(key, v)?,
            "deltas" => self.frontend.deltas = parse_bool(key, v)?,
            "cmvn" => self.frontend.cmvn = parse_bool(key, v)?,
            "splice_left" => self.frontend.splice_left = parse_num(key, v)?,
            "splice_right" => self.frontend.splice_right = parse_num(key, v)?,
            "skip" => self.frontend.keep_every = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Build from ordered pairs; later pairs win. A `preset` anywhere is
    /// applied first so explicit values always override it.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        if let Some((_, p)) = pairs.iter().rev().find(|(k, _)| k.as_ref().trim() == "preset") {
            cfg.apply_preset(p.as_ref().trim().parse()?);
        }
        for (k, v) in pairs {
            if k.as_ref().trim() != "preset" {
                cfg.set(k.as_ref(), v.as_ref())?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.layers == 0 || self.hidden == 0 {
            return bad("layers and hidden must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.beam_width == 0 {
            return bad("beam_width must be positive");
        }
        if self.frontend.keep_every == 0 {
            return bad("skip must be positive");
        }
        if matches!(self.components, Some(0)) {
            return bad("components must be positive");
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip_norm must be positive");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be positive");
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let f = &self.frontend;
        vec![
            ("head", self.head.to_string()),
            ("components", self.components.map_or("auto".into(), |n| n.to_string())),
            ("lambda", self.lambda.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("min_lr", self.min_lr.to_string()),
            ("clip_norm", self.clip_norm.map_or("off".into(), |c| c.to_string())),
            ("seed", self.seed.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("prior_alpha", self.prior_alpha.to_string()),
            ("beam_width", self.beam_width.to_string()),
            ("deltas", f.deltas.to_string()),
            ("cmvn", f.cmvn.to_string()),
            ("splice_left", f.splice_left.to_string()),
            ("splice_right", f.splice_right.to_string()),
            ("skip", f.keep_every.to_string()),
        ]
    }

    pub fn model_config(&self, input_dim: usize, num_labels: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                input_dim,
                hidden: self.hidden,
                layers: self.layers,
            },
            head: self.head,
            num_labels,
            components: self.components,
            lambda: self.lambda,
        }
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Parse `key = value` lines. `#` starts a comment.
pub fn parse_config_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::parse(origin, i + 1, "expected `key = value`"));
        }
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

pub fn read_config_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_pairs(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let c = TrainConfig::from_pairs(&[("preset", "librispeech")]).unwrap();
        assert_eq!((c.lr, c.lr_decay, c.batch_size), (0.0004, 0.5, 64));
        let c = TrainConfig::from_pairs(&[("preset", "wsj")]).unwrap();
        assert_eq!((c.lr, c.lr_decay, c.batch_size), (0.001, 0.7, 32));
    }

    #[test]
    fn explicit_keys_beat_preset_regardless_of_order() {
        let c = TrainConfig::from_pairs(&[("lr", "0.5"), ("preset", "librispeech")]).unwrap();
        assert_eq!(c.lr, 0.5);
        assert_eq!(c.batch_size, 64);
    }

    #[test]
    fn later_pairs_win() {
        let c = TrainConfig::from_pairs(&[("seed", "3"), ("seed", "9")]).unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn round_trip_through_pairs() {
        let mut c = TrainConfig::default();
        c.head = HeadKind::Mom;
        c.components = Some(7);
        c.clip_norm = Some(2.5);
        c.lr = 0.1 + 0.2;
        c.frontend.keep_every = 1;
        let back = TrainConfig::from_pairs(&c.to_pairs()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn file_parsing() {
        let text = "# comment\nhead = single\n\n lr=0.01  # trailing\n";
        let pairs = parse_config_pairs(text, Path::new("c")).unwrap();
        assert_eq!(pairs, vec![("head".into(), "single".into()), ("lr".into(), "0.01".into())]);
        assert!(parse_config_pairs("lr 0.1", Path::new("c")).is_err());
        assert!(parse_config_pairs("lr =", Path::new("c")).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_pairs(&[("nope", "1")]).is_err());
        assert!(TrainConfig::from_pairs(&[("lr", "-1")]).is_err());
        assert!(TrainConfig::from_pairs(&[("lr_decay", "1.5")]).is_err());
        assert!(TrainConfig::from_pairs(&[("deltas", "maybe")]).is_err());
        assert!(TrainConfig::from_pairs(&[("head", "tiny")]).is_err());
        assert!(TrainConfig::from_pairs(&[("batch_size", "0")]).is_err());
        assert!(TrainConfig::from_pairs(&[("preset", "timit")]).is_err());
    }
}
