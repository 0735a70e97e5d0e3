//! Text formats.
//!
//! Features: per utterance a header `<utt_id> <speaker_id> <T> <D>` followed by
//! `T` lines of `D` space-separated reals, with a blank line between
//! utterances. Labels: `<utt_id> <token_id> ...` per line. Token table:
//! `<symbol> <id>` per line, id 0 being `<blk>`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{FeatureSequence, LabelSequence};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::BLANK;

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text, path)
}

pub fn parse_features(text: &str, origin: &Path) -> Result<Vec<FeatureSequence>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut lines = text.lines().enumerate().peekable();

    while let Some((idx, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let header_err = || Error::parse(origin, idx + 1, "expected `<utt_id> <speaker_id> <T> <D>`");
        if fields.len() != 4 {
            return Err(header_err());
        }
        let t_len: usize = fields[2].parse().map_err(|_| header_err())?;
        let dim: usize = fields[3].parse().map_err(|_| header_err())?;
        if t_len == 0 || dim == 0 {
            return Err(Error::parse(origin, idx + 1, "T and D must be positive"));
        }
        let utt = fields[0].to_string();
        if !seen.insert(utt.clone()) {
            return Err(Error::DuplicateUtterance(utt));
        }

        let mut data = Vec::with_capacity(t_len * dim);
        for row in 0..t_len {
            let (ridx, rline) = lines.next().ok_or_else(|| {
                Error::parse(origin, idx + 1, format!("utterance `{utt}` ends after {row} of {t_len} rows"))
            })?;
            let before = data.len();
            for tok in rline.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(origin, ridx + 1, format!("bad number `{tok}`")))?;
                data.push(v);
            }
            if data.len() - before != dim {
                return Err(Error::parse(
                    origin,
                    ridx + 1,
                    format!("expected {dim} values, found {}", data.len() - before),
                ));
            }
        }
        let frames = Tensor::new(vec![t_len, dim], data)?;
        if !frames.is_finite() {
            return Err(Error::parse(origin, idx + 1, format!("non-finite value in `{utt}`")));
        }
        out.push(FeatureSequence {
            utterance_id: utt,
            speaker_id: fields[1].to_string(),
            frames,
        });
    }
    Ok(out)
}

pub fn write_features(path: impl AsRef<Path>, seqs: &[FeatureSequence]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (i, seq) in seqs.iter().enumerate() {
        if i > 0 {
            text.push('\n');
        }
        let _ = writeln!(
            text,
            "{} {} {} {}",
            seq.utterance_id,
            seq.speaker_id,
            seq.num_frames(),
            seq.dim()
        );
        for t in 0..seq.num_frames() {
            write_row(&mut text, seq.frames.row(t));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_row(out: &mut String, row: &[f64]) {
    for (k, v) in row.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        // shortest representation that parses back to the same f64
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text, path)
}

pub fn parse_labels(text: &str, origin: &Path) -> Result<Vec<LabelSequence>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(utt) = fields.next() else { continue };
        let tokens = fields
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| Error::parse(origin, idx + 1, format!("bad token id `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if tokens.contains(&BLANK) {
            return Err(Error::parse(origin, idx + 1, "blank id 0 in a label sequence"));
        }
        if !seen.insert(utt.to_string()) {
            return Err(Error::DuplicateUtterance(utt.to_string()));
        }
        out.push(LabelSequence {
            utterance_id: utt.to_string(),
            tokens,
        });
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelSequence]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for l in labels {
        text.push_str(&l.utterance_id);
        for t in &l.tokens {
            let _ = write!(text, " {t}");
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Symbol table; index = token id, entry 0 is `<blk>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenTable {
    symbols: Vec<String>,
}

impl TokenTable {
    pub const BLANK_SYMBOL: &'static str = "<blk>";

    /// Table with `<blk>` followed by the given non-blank symbols.
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Self {
        let mut all = vec![Self::BLANK_SYMBOL.to_string()];
        all.extend(symbols.into_iter().map(Into::into));
        TokenTable { symbols: all }
    }

    /// Generic symbols `t1 … tK`.
    pub fn numbered(num_labels: usize) -> Self {
        Self::new((1..=num_labels).map(|k| format!("t{k}")))
    }

    /// Number of non-blank labels `K`.
    pub fn num_labels(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn symbol(&self, id: usize) -> Option<&str> {
        self.symbols.get(id).map(String::as_str)
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn render(&self, tokens: &[usize]) -> String {
        tokens
            .iter()
            .map(|&t| self.symbol(t).map_or_else(|| format!("<{t}>"), str::to_string))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries: Vec<(usize, String, usize)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                [sym, id] => {
                    let id = id
                        .parse()
                        .map_err(|_| Error::parse(origin, idx + 1, format!("bad id `{id}`")))?;
                    entries.push((id, sym.to_string(), idx + 1));
                }
                _ => return Err(Error::parse(origin, idx + 1, "expected `<symbol> <id>`")),
            }
        }
        entries.sort();
        for (expect, (id, sym, line)) in entries.iter().enumerate() {
            if *id != expect {
                return Err(Error::parse(origin, *line, format!("ids must be dense from 0, missing {expect}")));
            }
            if *id == BLANK && sym != Self::BLANK_SYMBOL {
                return Err(Error::parse(origin, *line, "id 0 is reserved for <blk>"));
            }
        }
        if entries.len() < 2 {
            return Err(Error::parse(origin, 1, "token table needs <blk> and at least one label"));
        }
        Ok(TokenTable {
            symbols: entries.into_iter().map(|(_, s, _)| s).collect(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for (id, s) in self.symbols.iter().enumerate() {
            let _ = writeln!(text, "{s} {id}");
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
