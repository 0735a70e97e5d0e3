//! Self-checks shared by the command line and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctc::{brute_force_loss, ctc_loss, min_frames};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::heads::HeadKind;
use crate::model::{AcousticModel, ModelConfig};
use crate::numerics::{grad_check, GradCheckReport, ParamStore, Tensor};

/// Tiny end-to-end model used for finite-difference checks: 2-layer BiLSTM
/// with 6 hidden units, 4-dim input frames, `K = 3`.
pub fn tiny_model(head: HeadKind) -> Result<AcousticModel> {
    AcousticModel::new(&ModelConfig {
        encoder: EncoderConfig {
            input_dim: 4,
            hidden: 6,
            layers: 2,
        },
        head,
        num_labels: 3,
        components: None,
        lambda: crate::heads::DEFAULT_LAMBDA,
    })
}

/// Initialized parameters with every tensor (peepholes and mixing weights
/// included) pushed away from its special initial value.
pub fn perturbed_params(model: &AcousticModel, seed: u64, spread: f64) -> Result<ParamStore> {
    let mut params = model.init_params(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        for v in params.values_mut(&name)? {
            *v += rng.random_range(-spread..spread);
        }
    }
    Ok(params)
}

/// Finite-difference check of the full model (encoder → head → CTC) on five
/// random frames and a two-token target.
pub fn model_gradcheck(head: HeadKind, seed: u64, eps: f64) -> Result<GradCheckReport> {
    let model = tiny_model(head)?;
    let params = perturbed_params(&model, seed, 0.3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(17));
    let frames = Tensor::new(
        vec![5, 4],
        (0..20).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let tokens = [rng.random_range(1..=3usize), rng.random_range(1..=3usize)];
    grad_check(|p| model.loss_and_grads(p, &frames, &tokens), &params, eps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub cases: usize,
    pub max_rel_err: f64,
}

/// Compare [`ctc_loss`] with [`brute_force_loss`] on random feasible
/// instances with `T ≤ 6` and `K ≤ 4`.
pub fn ctc_oracle_suite(cases: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        cases: 0,
        max_rel_err: 0.0,
    };
    while report.cases < cases {
        let k = rng.random_range(1..=4usize);
        let t_len = rng.random_range(1..=6usize);
        let len = rng.random_range(1..=t_len);
        let tokens: Vec<usize> = (0..len).map(|_| rng.random_range(1..=k)).collect();
        if min_frames(&tokens) > t_len {
            continue;
        }
        let logits = Tensor::new(
            vec![t_len, k + 1],
            (0..t_len * (k + 1)).map(|_| rng.random_range(-3.0..3.0)).collect(),
        )?;
        let fast = ctc_loss(&logits, &tokens)?.loss;
        let slow = brute_force_loss(&logits, &tokens)?;
        let rel = (fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE);
        report.max_rel_err = report.max_rel_err.max(rel);
        report.cases += 1;
    }
    Ok(report)
}
