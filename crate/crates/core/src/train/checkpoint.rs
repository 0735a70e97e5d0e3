//! Plain-text checkpoints.
//!
//! Every float is written in Rust's shortest round-trip decimal form, so a
//! load/save cycle reproduces the file byte for byte and no byte order is
//! involved.

use std::fmt::Write as _;
use std::path::Path;

use super::adam::Adam;
use super::config::TrainConfig;
use super::EpochMetrics;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

const MAGIC: &str = "hrctc-checkpoint 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Feature dimension after the front end.
    pub input_dim: usize,
    pub num_labels: usize,
    /// Completed epochs.
    pub epoch: usize,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub history: Vec<EpochMetrics>,
    pub prior: Vec<f64>,
    pub params: ParamStore,
    pub adam: Adam,
}

fn join(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

fn write_store(out: &mut String, group: &str, store: &ParamStore) {
    for (name, t) in store {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "tensor {group} {name} {}", dims.join(" "));
        let _ = writeln!(out, "{}", join(t.data()));
    }
}

impl Checkpoint {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "input_dim {}", self.input_dim);
        let _ = writeln!(out, "num_labels {}", self.num_labels);
        let _ = writeln!(out, "epoch {}", self.epoch);
        let _ = writeln!(out, "lr {}", self.lr);
        let _ = writeln!(out, "adam {} {} {} {}", self.adam.beta1, self.adam.beta2, self.adam.eps, self.adam.t);
        let pairs = self.config.to_pairs();
        let _ = writeln!(out, "config {}", pairs.len());
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "prior {}", join(&self.prior));
        let _ = writeln!(out, "history {}", self.history.len());
        for h in &self.history {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                h.epoch, h.train_loss, h.val_loss, h.val_ter, h.lr
            );
        }
        let _ = writeln!(out, "tensors {}", 3 * self.params.len());
        write_store(&mut out, "param", &self.params);
        write_store(&mut out, "adam_m", &self.adam.m);
        write_store(&mut out, "adam_v", &self.adam.v);
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::Checkpoint(format!("{}: truncated before {what}", origin.display())))
        };
        let bad = |line: usize, msg: &str| Error::parse(origin, line, msg);
        fn num<T: std::str::FromStr>(s: &str, line: usize, origin: &Path) -> Result<T> {
            s.parse().map_err(|_| Error::parse(origin, line, format!("bad number `{s}`")))
        }
        fn floats(s: &str, line: usize, origin: &Path) -> Result<Vec<f64>> {
            s.split_whitespace().map(|v| num(v, line, origin)).collect()
        }
        let field = |line: (usize, &str), key: &str| -> Result<String> {
            line.1
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(line.0, &format!("expected `{key}`")))
        };

        let (n, magic) = next("header")?;
        if magic != MAGIC {
            return Err(bad(n, "not a checkpoint"));
        }
        let l = next("input_dim")?;
        let input_dim = num(&field(l, "input_dim")?, l.0, origin)?;
        let l = next("num_labels")?;
        let num_labels = num(&field(l, "num_labels")?, l.0, origin)?;
        let l = next("epoch")?;
        let epoch = num(&field(l, "epoch")?, l.0, origin)?;
        let l = next("lr")?;
        let lr = num(&field(l, "lr")?, l.0, origin)?;
        let l = next("adam")?;
        let adam_fields: Vec<String> = field(l, "adam")?.split_whitespace().map(str::to_string).collect();
        if adam_fields.len() != 4 {
            return Err(bad(l.0, "expected `adam beta1 beta2 eps t`"));
        }
        let l = next("config")?;
        let n_cfg: usize = num(&field(l, "config")?, l.0, origin)?;
        let mut pairs = Vec::with_capacity(n_cfg);
        for _ in 0..n_cfg {
            let (i, line) = next("config entry")?;
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(i, "expected `key = value`"))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        let config = TrainConfig::from_pairs(&pairs)?;
        let l = next("prior")?;
        let prior = floats(&field(l, "prior")?, l.0, origin)?;
        let l = next("history")?;
        let n_hist: usize = num(&field(l, "history")?, l.0, origin)?;
        let mut history = Vec::with_capacity(n_hist);
        for _ in 0..n_hist {
            let (i, line) = next("history entry")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(i, "expected 5 history fields"));
            }
            history.push(EpochMetrics {
                epoch: num(f[0], i, origin)?,
                train_loss: num(f[1], i, origin)?,
                val_loss: num(f[2], i, origin)?,
                val_ter: num(f[3], i, origin)?,
                lr: num(f[4], i, origin)?,
            });
        }
        let l = next("tensors")?;
        let n_tensors: usize = num(&field(l, "tensors")?, l.0, origin)?;
        let (mut params, mut m, mut v) = (ParamStore::new(), ParamStore::new(), ParamStore::new());
        for _ in 0..n_tensors {
            let (i, head) = next("tensor header")?;
            let f: Vec<&str> = head.split_whitespace().collect();
            if f.len() < 3 || f[0] != "tensor" {
                return Err(bad(i, "expected `tensor <group> <name> <dims>`"));
            }
            let shape: Vec<usize> = f[3..].iter().map(|d| num(d, i, origin)).collect::<Result<_>>()?;
            let (j, body) = next("tensor values")?;
            let t = Tensor::new(shape, floats(body, j, origin)?)
                .map_err(|_| bad(j, "tensor length does not match its shape"))?;
            match f[1] {
                "param" => params.insert(f[2], t)?,
                "adam_m" => m.insert(f[2], t)?,
                "adam_v" => v.insert(f[2], t)?,
                _ => return Err(bad(i, "unknown tensor group")),
            }
        }
        if let Ok((i, _)) = next("end") {
            return Err(bad(i, "trailing content"));
        }
        let same_layout = |a: &ParamStore| {
            a.len() == params.len()
                && a.iter().zip(params.iter()).all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
        };
        if !same_layout(&m) || !same_layout(&v) {
            return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
        }
        Ok(Checkpoint {
            config,
            input_dim,
            num_labels,
            epoch,
            lr,
            history,
            prior,
            params,
            adam: Adam {
                beta1: num(&adam_fields[0], l.0, origin)?,
                beta2: num(&adam_fields[1], l.0, origin)?,
                eps: num(&adam_fields[2], l.0, origin)?,
                t: num(&adam_fields[3], l.0, origin)?,
                m,
                v,
            },
        })
    }

    /// Write via a temporary file and rename, so a crash never leaves a
    /// half-written checkpoint behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.render()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
