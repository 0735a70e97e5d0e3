//! Seeded synthetic corpora standing in for transcribed speech.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureSequence, LabelSequence};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// How tokens map to frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SynthTask {
    /// Token `k` emits the one-hot vector `e_k` (`D = K`).
    #[default]
    Plain,
    /// Tokens `k` and `k + K/2` share dimension `(k − 1) mod K/2`. Which of the
    /// pair may occur is fixed by the parity of the preceding token's
    /// dimension, so a frame maps to two labels depending on context.
    Contextual,
}

impl std::str::FromStr for SynthTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(SynthTask::Plain),
            "contextual" => Ok(SynthTask::Contextual),
            other => Err(Error::InvalidArgument(format!("unknown synthetic task `{other}`"))),
        }
    }
}

impl std::fmt::Display for SynthTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthTask::Plain => "plain",
            SynthTask::Contextual => "contextual",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub num_utts: usize,
    /// Number of non-blank labels `K`.
    pub num_labels: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_frames_per_token: usize,
    pub max_frames_per_token: usize,
    pub noise_sigma: f64,
    /// Magnitude of the non-zero embedding entry.
    pub scale: f64,
    pub seed: u64,
    pub task: SynthTask,
    pub num_speakers: usize,
    /// Prefix of generated utterance ids.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_utts: 250,
            num_labels: 20,
            min_len: 3,
            max_len: 10,
            min_frames_per_token: 2,
            max_frames_per_token: 5,
            noise_sigma: 0.3,
            scale: 2.0,
            seed: 1,
            task: SynthTask::Plain,
            num_speakers: 5,
            id_prefix: "utt".into(),
        }
    }
}

impl SynthConfig {
    pub fn feature_dim(&self) -> usize {
        match self.task {
            SynthTask::Plain => self.num_labels,
            SynthTask::Contextual => self.num_labels / 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.num_labels < 2 {
            return bad("K must be at least 2");
        }
        if self.task == SynthTask::Contextual && (self.num_labels < 4 || self.num_labels % 2 == 1) {
            return bad("the contextual task needs an even K >= 4");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("token count range must satisfy 1 <= min <= max");
        }
        if self.min_frames_per_token == 0 || self.min_frames_per_token > self.max_frames_per_token {
            return bad("frames-per-token range must satisfy 1 <= min <= max");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise sigma must be finite and non-negative");
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return bad("embedding scale must be finite and positive");
        }
        if self.num_speakers == 0 {
            return bad("need at least one speaker");
        }
        Ok(())
    }

    /// Noise-free frame emitted for `token`.
    pub fn embedding(&self, token: usize) -> Vec<f64> {
        let dim = self.feature_dim();
        let mut e = vec![0.0; dim];
        e[(token - 1) % dim] = self.scale;
        e
    }

    /// Adjacent tokens never share a dimension, which would leave no visible
    /// boundary. In the contextual task the preceding dimension's parity
    /// (even at the start) also selects the half of the label set.
    fn may_follow(&self, prev: usize, next: usize) -> bool {
        let dim = self.feature_dim();
        let same_dim = prev != 0 && (prev - 1) % dim == (next - 1) % dim;
        match self.task {
            SynthTask::Plain => !same_dim,
            SynthTask::Contextual => {
                let half = if prev == 0 { 0 } else { ((prev - 1) % dim) % 2 };
                !same_dim && (next - 1) / dim == half
            }
        }
    }
}

/// Generate `num_utts` utterances. Deterministic given the config.
pub fn synth_generate(cfg: &SynthConfig) -> Result<(Vec<FeatureSequence>, Vec<LabelSequence>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let dim = cfg.feature_dim();

    let mut feats = Vec::with_capacity(cfg.num_utts);
    let mut labels = Vec::with_capacity(cfg.num_utts);
    for u in 0..cfg.num_utts {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut tokens = Vec::with_capacity(len);
        let mut prev = 0;
        for _ in 0..len {
            let next = loop {
                let candidate = rng.random_range(1..=cfg.num_labels);
                if cfg.may_follow(prev, candidate) {
                    break candidate;
                }
            };
            tokens.push(next);
            prev = next;
        }

        let mut data = Vec::new();
        for &tok in &tokens {
            let run = rng.random_range(cfg.min_frames_per_token..=cfg.max_frames_per_token);
            let base = cfg.embedding(tok);
            for _ in 0..run {
                for &b in &base {
                    let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    data.push(b + n);
                }
            }
        }
        let t_len = data.len() / dim;
        let id = format!("{}{:05}", cfg.id_prefix, u);
        feats.push(FeatureSequence {
            utterance_id: id.clone(),
            speaker_id: format!("spk{:02}", u % cfg.num_speakers),
            frames: Tensor::new(vec![t_len, dim], data)?,
        });
        labels.push(LabelSequence {
            utterance_id: id,
            tokens,
        });
    }
    Ok((feats, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_single_frames_are_embeddings() {
        let cfg = SynthConfig {
            num_utts: 5,
            min_frames_per_token: 1,
            max_frames_per_token: 1,
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let (feats, labels) = synth_generate(&cfg).unwrap();
        for (f, l) in feats.iter().zip(&labels) {
            assert_eq!(f.num_frames(), l.tokens.len());
            for (t, &tok) in l.tokens.iter().enumerate() {
                assert_eq!(f.frames.row(t), cfg.embedding(tok).as_slice());
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            num_utts: 20,
            task: SynthTask::Contextual,
            ..SynthConfig::default()
        };
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
        let other = SynthConfig { seed: 2, ..cfg.clone() };
        assert_ne!(synth_generate(&cfg).unwrap().1, synth_generate(&other).unwrap().1);
    }

    #[test]
    fn lengths_and_ids_respect_ranges() {
        let cfg = SynthConfig::default();
        let (feats, labels) = synth_generate(&cfg).unwrap();
        for (f, l) in feats.iter().zip(&labels) {
            let n = l.tokens.len();
            assert!((3..=10).contains(&n));
            assert!(f.num_frames() >= 2 * n && f.num_frames() <= 5 * n);
            assert!(l.tokens.iter().all(|&t| (1..=20).contains(&t)));
            assert!(l.tokens.windows(2).all(|w| w[0] != w[1]));
            assert_eq!(f.dim(), 20);
        }
    }

    #[test]
    fn contextual_frames_are_ambiguous_without_context() {
        let cfg = SynthConfig {
            task: SynthTask::Contextual,
            ..SynthConfig::default()
        };
        assert_eq!(cfg.feature_dim(), 10);
        assert_eq!(cfg.embedding(1), cfg.embedding(11));
        let (_, labels) = synth_generate(&cfg).unwrap();
        let mut seen = [false; 21];
        for l in &labels {
            assert!(l.tokens[0] <= 10);
            for w in l.tokens.windows(2) {
                let (a, b) = ((w[0] - 1) % 10, (w[1] - 1) % 10);
                assert_ne!(a, b);
                assert_eq!((w[1] - 1) / 10, a % 2);
            }
            for &t in &l.tokens {
                seen[t] = true;
            }
        }
        assert!(seen[1..].iter().all(|&s| s));
    }

    #[test]
    fn invalid_ranges() {
        for cfg in [
            SynthConfig { num_labels: 1, ..SynthConfig::default() },
            SynthConfig { min_len: 4, max_len: 3, ..SynthConfig::default() },
            SynthConfig { min_frames_per_token: 0, ..SynthConfig::default() },
            SynthConfig { noise_sigma: -1.0, ..SynthConfig::default() },
            SynthConfig { scale: 0.0, ..SynthConfig::default() },
            SynthConfig { num_labels: 7, task: SynthTask::Contextual, ..SynthConfig::default() },
        ] {
            assert!(synth_generate(&cfg).is_err());
        }
    }
}
