use crate::error::{Error, Result};
use crate::model::AcousticModel;
use crate::numerics::{ParamStore, Tensor};

/// A preprocessed utterance with its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub utterance_id: String,
    pub frames: Tensor,
    pub tokens: Vec<usize>,
}

/// Zero-padded `[B, T_max, D]` features with the true length of each row.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub data: Tensor,
    pub lengths: Vec<usize>,
    pub tokens: Vec<Vec<usize>>,
}

pub fn pad_batch(examples: &[&Example]) -> Result<PaddedBatch> {
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let dim = first.frames.cols();
    let t_max = examples.iter().map(|e| e.frames.rows()).max().unwrap_or(0);
    let mut data = vec![0.0; examples.len() * t_max * dim];
    for (b, e) in examples.iter().enumerate() {
        if e.frames.cols() != dim {
            return Err(Error::ShapeMismatch {
                op: "pad_batch",
                lhs: first.frames.shape().to_vec(),
                rhs: e.frames.shape().to_vec(),
            });
        }
        let off = b * t_max * dim;
        data[off..off + e.frames.numel()].copy_from_slice(e.frames.data());
    }
    Ok(PaddedBatch {
        data: Tensor::new(vec![examples.len(), t_max, dim], data)?,
        lengths: examples.iter().map(|e| e.frames.rows()).collect(),
        tokens: examples.iter().map(|e| e.tokens.clone()).collect(),
    })
}

impl PaddedBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Unpadded frames of row `b`.
    pub fn frames(&self, b: usize) -> Result<Tensor> {
        let (t_max, dim) = (self.data.shape()[1], self.data.shape()[2]);
        let off = b * t_max * dim;
        Tensor::new(
            vec![self.lengths[b], dim],
            self.data.data()[off..off + self.lengths[b] * dim].to_vec(),
        )
    }
}

/// Mean CTC loss over the batch and its gradient. Padding never reaches the
/// model; gradients are accumulated in row order.
pub fn batch_loss_and_grads(
    model: &AcousticModel,
    params: &ParamStore,
    batch: &PaddedBatch,
) -> Result<(f64, ParamStore)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for b in 0..batch.len() {
        let (loss, g) = model.loss_and_grads(params, &batch.frames(b)?, &batch.tokens[b])?;
        total += loss;
        grads.add_scaled(&g, 1.0)?;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok((total * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadKind;
    use crate::verify::tiny_model;

    fn example(id: &str, t: usize, tokens: Vec<usize>) -> Example {
        Example {
            utterance_id: id.into(),
            frames: Tensor::new(vec![t, 4], (0..t * 4).map(|i| (i as f64 * 0.37).sin()).collect())
                .unwrap(),
            tokens,
        }
    }

    #[test]
    fn padding_layout() {
        let a = example("a", 2, vec![1]);
        let b = example("b", 4, vec![2, 3]);
        let batch = pad_batch(&[&a, &b]).unwrap();
        assert_eq!(batch.data.shape(), &[2, 4, 4]);
        assert_eq!(batch.lengths, vec![2, 4]);
        assert_eq!(batch.frames(0).unwrap(), a.frames);
        assert_eq!(batch.frames(1).unwrap(), b.frames);
        assert!(batch.data.data()[8..16].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_loss_is_mean_of_utterance_losses() {
        let model = tiny_model(HeadKind::HighRank).unwrap();
        let params = model.init_params(2).unwrap();
        let a = example("a", 3, vec![1]);
        let b = example("b", 5, vec![2, 3]);
        let batch = pad_batch(&[&a, &b]).unwrap();
        let (loss, grads) = batch_loss_and_grads(&model, &params, &batch).unwrap();
        let (la, ga) = model.loss_and_grads(&params, &a.frames, &a.tokens).unwrap();
        let (lb, gb) = model.loss_and_grads(&params, &b.frames, &b.tokens).unwrap();
        assert!((loss - 0.5 * (la + lb)).abs() < 1e-12);
        let mut expect = ga.clone();
        expect.add_scaled(&gb, 1.0).unwrap();
        expect.scale(0.5);
        for (name, g) in &grads {
            assert!(g.max_abs_diff(expect.get(name).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn rejects_mixed_dims_and_empty() {
        let a = example("a", 2, vec![1]);
        let mut b = example("b", 2, vec![1]);
        b.frames = Tensor::zeros(&[2, 3]);
        assert!(pad_batch(&[&a, &b]).is_err());
        assert!(pad_batch(&[]).is_err());
    }
}
