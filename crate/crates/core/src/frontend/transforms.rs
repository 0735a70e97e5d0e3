use std::collections::BTreeMap;

use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const DELTA_WINDOW: usize = 2;
const VARIANCE_FLOOR: f64 = 1e-8;

/// Regression deltas over a ±2 window with edge replication.
fn deltas(frames: &Tensor) -> Tensor {
    let (t_len, dim) = (frames.rows(), frames.cols());
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|d| (d * d) as f64).sum::<f64>();
    let mut out = Tensor::zeros(&[t_len, dim]);
    for t in 0..t_len {
        let row = out.row_mut(t);
        for d in 1..=DELTA_WINDOW {
            let ahead = frames.row((t + d).min(t_len - 1));
            let behind = frames.row(t.saturating_sub(d));
            for ((o, a), b) in row.iter_mut().zip(ahead).zip(behind) {
                *o += d as f64 * (a - b);
            }
        }
        row.iter_mut().for_each(|o| *o /= norm);
    }
    out
}

/// `[static, Δ, ΔΔ]` per frame; `D → 3D`.
pub fn append_deltas(seq: &FeatureSequence) -> FeatureSequence {
    let d1 = deltas(&seq.frames);
    let d2 = deltas(&d1);
    let (t_len, dim) = (seq.num_frames(), seq.dim());
    let mut data = Vec::with_capacity(t_len * dim * 3);
    for t in 0..t_len {
        data.extend_from_slice(seq.frames.row(t));
        data.extend_from_slice(d1.row(t));
        data.extend_from_slice(d2.row(t));
    }
    seq.with_frames(Tensor::new(vec![t_len, 3 * dim], data).expect("consistent extents"))
}

/// Mean and variance normalization pooled over all frames of each speaker.
pub fn cmvn_per_speaker(seqs: &[FeatureSequence]) -> Result<Vec<FeatureSequence>> {
    // speaker → (frame count, per-dim sum, per-dim sum of squares)
    let mut stats: BTreeMap<&str, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for seq in seqs {
        let dim = seq.dim();
        let entry = stats
            .entry(seq.speaker_id.as_str())
            .or_insert_with(|| (0, vec![0.0; dim], vec![0.0; dim]));
        if entry.1.len() != dim {
            return Err(Error::ShapeMismatch {
                op: "cmvn_per_speaker",
                lhs: vec![entry.1.len()],
                rhs: vec![dim],
            });
        }
        for t in 0..seq.num_frames() {
            for (k, &v) in seq.frames.row(t).iter().enumerate() {
                entry.1[k] += v;
            }
        }
        entry.0 += seq.num_frames();
    }
    // second pass for the variance about the mean (more accurate than E[x²]−μ²)
    let means: BTreeMap<&str, Vec<f64>> = stats
        .iter()
        .map(|(spk, (n, sum, _))| (*spk, sum.iter().map(|s| s / *n as f64).collect()))
        .collect();
    for seq in seqs {
        let mean = &means[seq.speaker_id.as_str()];
        let entry = stats.get_mut(seq.speaker_id.as_str()).expect("seen above");
        for t in 0..seq.num_frames() {
            for (k, &v) in seq.frames.row(t).iter().enumerate() {
                entry.2[k] += (v - mean[k]) * (v - mean[k]);
            }
        }
    }

    Ok(seqs
        .iter()
        .map(|seq| {
            let spk = seq.speaker_id.as_str();
            let (n, _, sq) = &stats[spk];
            let mean = &means[spk];
            let inv_std: Vec<f64> = sq
                .iter()
                .map(|s| 1.0 / (s / *n as f64).max(VARIANCE_FLOOR).sqrt())
                .collect();
            let mut frames = seq.frames.clone();
            for t in 0..frames.rows() {
                for (k, v) in frames.row_mut(t).iter_mut().enumerate() {
                    *v = (*v - mean[k]) * inv_std[k];
                }
            }
            seq.with_frames(frames)
        })
        .collect())
}

/// Concatenate each frame with `left` previous and `right` following frames,
/// replicating the edge frames; `D → (left + 1 + right)·D`.
pub fn splice(seq: &FeatureSequence, left: usize, right: usize) -> FeatureSequence {
    let (t_len, dim) = (seq.num_frames(), seq.dim());
    let width = left + 1 + right;
    let mut data = Vec::with_capacity(t_len * dim * width);
    for t in 0..t_len {
        for offset in 0..width {
            let src = (t + offset).saturating_sub(left).min(t_len - 1);
            data.extend_from_slice(seq.frames.row(src));
        }
    }
    seq.with_frames(Tensor::new(vec![t_len, width * dim], data).expect("consistent extents"))
}

/// Keep frames whose index is a multiple of `keep_every`.
pub fn skip_frames(seq: &FeatureSequence, keep_every: usize) -> Result<FeatureSequence> {
    if keep_every == 0 {
        return Err(Error::InvalidArgument("keep_every must be at least 1".into()));
    }
    let rows: Vec<&[f64]> = (0..seq.num_frames())
        .step_by(keep_every)
        .map(|t| seq.frames.row(t))
        .collect();
    Ok(seq.with_frames(Tensor::from_rows(&rows)?))
}

/// Which preprocessing steps to run. Defaults follow the recipe of a
/// 40-dim filterbank front end: deltas on, CMVN on, ±1 splicing, keep one
/// frame in three.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontendConfig {
    pub deltas: bool,
    pub cmvn: bool,
    pub splice_left: usize,
    pub splice_right: usize,
    pub keep_every: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            deltas: true,
            cmvn: true,
            splice_left: 1,
            splice_right: 1,
            keep_every: 3,
        }
    }
}

impl FrontendConfig {
    /// No processing at all.
    pub fn identity() -> Self {
        FrontendConfig {
            deltas: false,
            cmvn: false,
            splice_left: 0,
            splice_right: 0,
            keep_every: 1,
        }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        let d = if self.deltas { 3 * input_dim } else { input_dim };
        d * (self.splice_left + 1 + self.splice_right)
    }

    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames.div_ceil(self.keep_every)
    }

    /// Run deltas → CMVN → splice → skip over a set of utterances.
    pub fn apply(&self, seqs: &[FeatureSequence]) -> Result<Vec<FeatureSequence>> {
        let mut out: Vec<FeatureSequence> = if self.deltas {
            seqs.iter().map(append_deltas).collect()
        } else {
            seqs.to_vec()
        };
        if self.cmvn {
            out = cmvn_per_speaker(&out)?;
        }
        if self.splice_left + self.splice_right > 0 {
            out = out
                .iter()
                .map(|s| splice(s, self.splice_left, self.splice_right))
                .collect();
        }
        if self.keep_every > 1 {
            out = out
                .iter()
                .map(|s| skip_frames(s, self.keep_every))
                .collect::<Result<_>>()?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(spk: &str, rows: &[&[f64]]) -> FeatureSequence {
        FeatureSequence {
            utterance_id: format!("u-{spk}-{}", rows.len()),
            speaker_id: spk.to_string(),
            frames: Tensor::from_rows(rows).unwrap(),
        }
    }

    fn ramp(t_len: usize) -> FeatureSequence {
        let rows: Vec<Vec<f64>> = (0..t_len).map(|t| vec![t as f64]).collect();
        FeatureSequence {
            utterance_id: "ramp".into(),
            speaker_id: "s".into(),
            frames: Tensor::from_rows(&rows).unwrap(),
        }
    }

    #[test]
    fn deltas_of_constant_are_zero() {
        let s = seq("a", &[&[2.0, -1.0], &[2.0, -1.0], &[2.0, -1.0], &[2.0, -1.0]]);
        let d = append_deltas(&s);
        assert_eq!(d.dim(), 6);
        for t in 0..4 {
            assert_eq!(&d.frames.row(t)[..2], &[2.0, -1.0]);
            assert!(d.frames.row(t)[2..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn deltas_of_ramp_are_one_in_the_interior() {
        let d = append_deltas(&ramp(9));
        for t in 2..7 {
            assert!((d.frames.get(t, 1) - 1.0).abs() < 1e-15, "t={t}");
        }
        // second-order deltas vanish where the first-order window is flat
        for t in 4..5 {
            assert!(d.frames.get(t, 2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_frame_deltas_are_zero() {
        let d = append_deltas(&seq("a", &[&[3.0, 4.0]]));
        assert_eq!(d.frames.row(0), &[3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cmvn_single_speaker_has_unit_stats() {
        let a = seq("a", &[&[1.0, 5.0, 7.0], &[2.0, 5.0, -3.0], &[4.0, 5.0, 0.5]]);
        let b = seq("a", &[&[-1.0, 5.0, 2.0], &[8.0, 5.0, 1.0]]);
        let out = cmvn_per_speaker(&[a, b]).unwrap();
        let rows: Vec<&[f64]> = out.iter().flat_map(|s| (0..s.num_frames()).map(|t| s.frames.row(t))).collect();
        let n = rows.len() as f64;
        for k in 0..3 {
            let mean: f64 = rows.iter().map(|r| r[k]).sum::<f64>() / n;
            let var: f64 = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            if k == 1 {
                // constant dimension collapses to zero through the floor
                assert!(rows.iter().all(|r| r[k] == 0.0));
            } else {
                assert!((var - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cmvn_speakers_are_independent() {
        let a = seq("a", &[&[0.0], &[2.0]]);
        let b = seq("b", &[&[10.0], &[30.0], &[20.0]]);
        let out = cmvn_per_speaker(&[a, b]).unwrap();
        assert_eq!(out[0].frames.data(), &[-1.0, 1.0]);
        let bvals = out[1].frames.data();
        assert!((bvals.iter().sum::<f64>()).abs() < 1e-12);
        // raw pooled stats across both speakers are far from (0, 1)
        let all = [0.0, 2.0, 10.0, 30.0, 20.0];
        let mean = all.iter().sum::<f64>() / 5.0;
        assert!(mean.abs() > 1.0);
    }

    #[test]
    fn splice_edges_and_interior() {
        let s = seq("a", &[&[1.0], &[2.0], &[3.0]]);
        let sp = splice(&s, 1, 1);
        assert_eq!(sp.frames.row(0), &[1.0, 1.0, 2.0]);
        assert_eq!(sp.frames.row(1), &[1.0, 2.0, 3.0]);
        assert_eq!(sp.frames.row(2), &[2.0, 3.0, 3.0]);

        let one = splice(&seq("a", &[&[7.0, 8.0]]), 1, 1);
        assert_eq!(one.frames.row(0), &[7.0, 8.0, 7.0, 8.0, 7.0, 8.0]);

        let wide = FeatureSequence {
            utterance_id: "w".into(),
            speaker_id: "s".into(),
            frames: Tensor::zeros(&[4, 120]),
        };
        assert_eq!(splice(&wide, 1, 1).dim(), 360);
    }

    #[test]
    fn skip_keeps_every_third() {
        let s = ramp(7);
        let k = skip_frames(&s, 3).unwrap();
        assert_eq!(k.frames.data(), &[0.0, 3.0, 6.0]);
        assert_eq!(skip_frames(&ramp(2), 3).unwrap().num_frames(), 1);
        assert_eq!(skip_frames(&s, 1).unwrap(), s);
        assert!(skip_frames(&s, 0).is_err());
    }

    #[test]
    fn frame_count_formulas_hold() {
        let cfg = FrontendConfig::default();
        for t_len in 1..=50 {
            let s = ramp(t_len);
            assert_eq!(append_deltas(&s).num_frames(), t_len);
            assert_eq!(splice(&s, 1, 1).num_frames(), t_len);
            let out = cfg.apply(std::slice::from_ref(&s)).unwrap();
            assert_eq!(out[0].num_frames(), t_len.div_ceil(3));
            assert_eq!(out[0].num_frames(), cfg.output_frames(t_len));
            assert_eq!(out[0].dim(), cfg.output_dim(1));
        }
    }

    #[test]
    fn pipeline_order_is_fixed() {
        // A spike at frame 1: skip-before-splice would drop it entirely,
        // splice-before-skip carries it into kept frame 0 as right context.
        let s = seq("a", &[&[0.0], &[9.0], &[0.0], &[0.0], &[0.0], &[0.0]]);
        let cfg = FrontendConfig {
            deltas: false,
            cmvn: false,
            ..FrontendConfig::default()
        };
        let ours = cfg.apply(std::slice::from_ref(&s)).unwrap().remove(0);
        assert_eq!(ours.frames.row(0), &[0.0, 0.0, 9.0]);

        let reversed = splice(&skip_frames(&s, 3).unwrap(), 1, 1);
        assert_ne!(ours.frames, reversed.frames);
    }

    #[test]
    fn transforms_are_pure() {
        let s = seq("a", &[&[0.3, 1.0], &[0.1, -2.0], &[5.0, 0.25]]);
        let cfg = FrontendConfig::default();
        let a = cfg.apply(std::slice::from_ref(&s)).unwrap();
        let b = cfg.apply(std::slice::from_ref(&s)).unwrap();
        assert_eq!(a, b);
    }
}
