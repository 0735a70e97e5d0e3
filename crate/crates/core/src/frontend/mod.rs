//! Feature ingestion, the preprocessing chain and synthetic corpora.
//!
//! The chain always runs in the order deltas → per-speaker CMVN → splicing →
//! frame skipping; [`FrontendConfig::apply`] is the only place that composes
//! the steps.

mod io;
mod synth;
mod transforms;

pub use io::{
    parse_features, parse_labels, read_features, read_labels, write_features, write_labels,
    TokenTable,
};
pub use synth::{synth_generate, SynthConfig, SynthTask};
pub use transforms::{append_deltas, cmvn_per_speaker, skip_frames, splice, FrontendConfig};

use crate::numerics::Tensor;

/// One utterance's acoustic frames, `T × D`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub utterance_id: String,
    pub speaker_id: String,
    pub frames: Tensor,
}

impl FeatureSequence {
    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub(crate) fn with_frames(&self, frames: Tensor) -> Self {
        FeatureSequence {
            utterance_id: self.utterance_id.clone(),
            speaker_id: self.speaker_id.clone(),
            frames,
        }
    }
}

/// Target token ids for one utterance. Ids are in `1..=K`; `0` is the blank.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSequence {
    pub utterance_id: String,
    pub tokens: Vec<usize>,
}
