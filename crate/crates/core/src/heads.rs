//! Projection heads from hidden features (`T × H`) to label logits (`T × N`,
//! `N = K + 1`).
//!
//! - [`HeadKind::Single`]: one shared matrix, `lᵢ = Mᵀhᵢ`.
//! - [`HeadKind::HighRank`]: `n` matrices `M₁…Mₙ` stored side by side in one
//!   `H × nN` tensor. Each component is squashed with `tanh`, the components
//!   are mixed with per-frame softmax weights `wᵢ = softmax(Wᵀhᵢ)`, and the
//!   mixture is scaled by a temperature `λ`:
//!   `lᵢ = λ Σⱼ wᵢⱼ tanh(Mⱼᵀhᵢ)`.
//! - [`HeadKind::Mom`]: the same mixture without `tanh` and `λ`. Per frame it
//!   equals projecting by the single mixed matrix `Σⱼ wᵢⱼ Mⱼ`, so it adds
//!   parameters but no rank.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::encoder::uniform;
use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor, Var};

pub const SINGLE_MATRIX: &str = "head.m";
pub const PROJECTIONS: &str = "head.proj";
pub const MIX_WEIGHTS: &str = "head.mix";
pub const DEFAULT_LAMBDA: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadKind {
    Single,
    Mom,
    HighRank,
}

impl HeadKind {
    pub const ALL: [HeadKind; 3] = [HeadKind::Single, HeadKind::Mom, HeadKind::HighRank];
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(HeadKind::Single),
            "mom" => Ok(HeadKind::Mom),
            "highrank" | "high_rank" => Ok(HeadKind::HighRank),
            other => Err(Error::InvalidArgument(format!(
                "unknown head `{other}` (expected single, mom or highrank)"
            ))),
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Single => "single",
            HeadKind::Mom => "mom",
            HeadKind::HighRank => "highrank",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Head {
    pub kind: HeadKind,
    pub input_dim: usize,
    /// `N`, labels including blank.
    pub num_classes: usize,
    /// `n`, mixture components (ignored by the single head).
    pub components: usize,
    /// Temperature; only the high-rank head uses it.
    pub lambda: f64,
}

impl Head {
    pub fn new(
        kind: HeadKind,
        input_dim: usize,
        num_classes: usize,
        components: usize,
        lambda: f64,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("a head needs blank plus at least one label".into()));
        }
        if kind != HeadKind::Single && components == 0 {
            return Err(Error::InvalidArgument("mixture heads need n >= 1".into()));
        }
        if kind == HeadKind::HighRank && !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {lambda}")));
        }
        Ok(Head {
            kind,
            input_dim,
            num_classes,
            components,
            lambda,
        })
    }

    pub fn init_params(&self, params: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<()> {
        match self.kind {
            HeadKind::Single => {
                params.insert(SINGLE_MATRIX, uniform(&[self.input_dim, self.num_classes], rng))
            }
            HeadKind::Mom | HeadKind::HighRank => {
                let width = self.components * self.num_classes;
                params.insert(PROJECTIONS, uniform(&[self.input_dim, width], rng))?;
                // zero mixing weights start every frame at the uniform mixture
                params.insert(MIX_WEIGHTS, Tensor::zeros(&[self.input_dim, self.components]))
            }
        }
    }

    /// Per-frame mixture weights `softmax(Wᵀhᵢ)`, `T × n`.
    pub fn mixture_weights(&self, tape: &mut Tape, params: &ParamStore, h: Var) -> Result<Var> {
        let w = tape.param(params, MIX_WEIGHTS)?;
        let scores = tape.matmul(h, w)?;
        tape.softmax_rows(scores)
    }

    /// Component logits `[l_{i,1} … l_{i,n}]`, `T × nN`: `tanh(Mⱼᵀhᵢ)` for the
    /// high-rank head, `Mⱼᵀhᵢ` for the mixture of matrices.
    pub fn components(&self, tape: &mut Tape, params: &ParamStore, h: Var) -> Result<Var> {
        let m = tape.param(params, PROJECTIONS)?;
        let z = tape.matmul(h, m)?;
        match self.kind {
            HeadKind::HighRank => tape.tanh(z),
            _ => Ok(z),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamStore, h: Var) -> Result<Var> {
        let cols = tape.value(h).cols();
        if cols != self.input_dim {
            return Err(Error::ShapeMismatch {
                op: "Head::forward",
                lhs: vec![self.input_dim],
                rhs: vec![cols],
            });
        }
        match self.kind {
            HeadKind::Single => {
                let m = tape.param(params, SINGLE_MATRIX)?;
                tape.matmul(h, m)
            }
            HeadKind::Mom => {
                let w = self.mixture_weights(tape, params, h)?;
                let z = self.components(tape, params, h)?;
                tape.mix_blocks(w, z)
            }
            HeadKind::HighRank => {
                let w = self.mixture_weights(tape, params, h)?;
                let z = self.components(tape, params, h)?;
                let mixed = tape.mix_blocks(w, z)?;
                tape.scale(mixed, self.lambda)
            }
        }
    }

    /// Untracked logits for `T × H` hidden features.
    pub fn logits(&self, params: &ParamStore, h: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone())?;
        let out = self.forward(&mut tape, params, hv)?;
        Ok(tape.value(out).clone())
    }

    /// Untracked mixture weights.
    pub fn weights(&self, params: &ParamStore, h: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone())?;
        let out = self.mixture_weights(&mut tape, params, hv)?;
        Ok(tape.value(out).clone())
    }

    /// Untracked component logits.
    pub fn component_logits(&self, params: &ParamStore, h: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone())?;
        let out = self.components(&mut tape, params, hv)?;
        Ok(tape.value(out).clone())
    }

    /// `Mⱼ` as an `H × N` matrix.
    pub fn projection(&self, params: &ParamStore, j: usize) -> Result<Tensor> {
        let all = params.get(PROJECTIONS)?;
        let n = self.num_classes;
        let rows: Vec<&[f64]> = (0..all.rows()).map(|r| &all.row(r)[j * n..(j + 1) * n]).collect();
        Tensor::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::softmax_rows;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    fn store(head: &Head, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        match head.kind {
            HeadKind::Single => p
                .insert(SINGLE_MATRIX, rand_tensor(&[head.input_dim, head.num_classes], &mut rng, 1.0))
                .unwrap(),
            _ => {
                let w = head.components * head.num_classes;
                p.insert(PROJECTIONS, rand_tensor(&[head.input_dim, w], &mut rng, 1.0)).unwrap();
                p.insert(MIX_WEIGHTS, rand_tensor(&[head.input_dim, head.components], &mut rng, 1.0))
                    .unwrap();
            }
        }
        p
    }

    #[test]
    fn single_head_trivial_matrices() {
        let head = Head::new(HeadKind::Single, 4, 4, 0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = rand_tensor(&[3, 4], &mut rng, 1.0);

        let mut p = ParamStore::new();
        p.insert(SINGLE_MATRIX, Tensor::zeros(&[4, 4])).unwrap();
        let l = head.logits(&p, &h).unwrap();
        assert!(l.data().iter().all(|&v| v == 0.0));
        assert!(softmax_rows(&l).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));

        p.replace(SINGLE_MATRIX, Tensor::identity(4)).unwrap();
        assert_eq!(head.logits(&p, &h).unwrap(), h);
    }

    #[test]
    fn single_head_matches_loop_product() {
        let head = Head::new(HeadKind::Single, 5, 3, 0, 1.0).unwrap();
        let p = store(&head, 2);
        let h = rand_tensor(&[4, 5], &mut ChaCha8Rng::seed_from_u64(3), 1.0);
        let l = head.logits(&p, &h).unwrap();
        let m = p.get(SINGLE_MATRIX).unwrap();
        for t in 0..4 {
            for k in 0..3 {
                let want: f64 = (0..5).map(|d| m.get(d, k) * h.get(t, d)).sum();
                assert!((l.get(t, k) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mixture_weight_edge_cases() {
        let h = rand_tensor(&[5, 4], &mut ChaCha8Rng::seed_from_u64(4), 1.0);
        let head = Head::new(HeadKind::HighRank, 4, 3, 6, 15.0).unwrap();
        let mut p = store(&head, 5);
        for t in 0..5 {
            let s: f64 = head.weights(&p, &h).unwrap().row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        p.replace(MIX_WEIGHTS, Tensor::zeros(&[4, 6])).unwrap();
        assert!(head.weights(&p, &h).unwrap().data().iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));

        let one = Head::new(HeadKind::HighRank, 4, 3, 1, 15.0).unwrap();
        let p1 = store(&one, 6);
        assert!(one.weights(&p1, &h).unwrap().data().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn highrank_single_component_is_scaled_tanh() {
        let head = Head::new(HeadKind::HighRank, 4, 3, 1, 12.5).unwrap();
        let p = store(&head, 7);
        let h = rand_tensor(&[3, 4], &mut ChaCha8Rng::seed_from_u64(8), 1.0);
        let l = head.logits(&p, &h).unwrap();
        let z = h.matmul(p.get(PROJECTIONS).unwrap()).unwrap();
        for (a, b) in l.data().iter().zip(z.data()) {
            assert!((a - 12.5 * b.tanh()).abs() < 1e-13);
        }
    }

    #[test]
    fn highrank_matches_stepwise_computation() {
        let (hd, n_cls, n) = (5, 4, 3);
        let head = Head::new(HeadKind::HighRank, hd, n_cls, n, 15.0).unwrap();
        let p = store(&head, 9);
        let h = rand_tensor(&[6, hd], &mut ChaCha8Rng::seed_from_u64(10), 1.0);
        let l = head.logits(&p, &h).unwrap();
        let w = p.get(MIX_WEIGHTS).unwrap();
        for t in 0..6 {
            let hi = h.row(t);
            let scores: Vec<f64> = (0..n).map(|j| (0..hd).map(|d| w.get(d, j) * hi[d]).sum()).collect();
            let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - mx).exp()).sum();
            let weights: Vec<f64> = scores.iter().map(|s| (s - mx).exp() / z).collect();
            for k in 0..n_cls {
                let mut acc = 0.0;
                for (j, wj) in weights.iter().enumerate() {
                    let mj = head.projection(&p, j).unwrap();
                    let proj: f64 = (0..hd).map(|d| mj.get(d, k) * hi[d]).sum();
                    acc += wj * proj.tanh();
                }
                assert!((l.get(t, k) - 15.0 * acc).abs() < 1e-12);
                assert!(l.get(t, k).abs() <= 15.0);
            }
        }
    }

    #[test]
    fn mom_single_component_equals_single_head() {
        let mom = Head::new(HeadKind::Mom, 4, 3, 1, 1.0).unwrap();
        let p = store(&mom, 11);
        let single = Head::new(HeadKind::Single, 4, 3, 0, 1.0).unwrap();
        let mut ps = ParamStore::new();
        ps.insert(SINGLE_MATRIX, p.get(PROJECTIONS).unwrap().clone()).unwrap();
        let h = rand_tensor(&[5, 4], &mut ChaCha8Rng::seed_from_u64(12), 1.0);
        let a = mom.logits(&p, &h).unwrap();
        let b = single.logits(&ps, &h).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn mom_matches_independent_mixture() {
        let mom = Head::new(HeadKind::Mom, 4, 3, 5, 1.0).unwrap();
        let p = store(&mom, 13);
        let h = rand_tensor(&[4, 4], &mut ChaCha8Rng::seed_from_u64(14), 1.0);
        let l = mom.logits(&p, &h).unwrap();
        let w = mom.weights(&p, &h).unwrap();
        for t in 0..4 {
            for k in 0..3 {
                let want: f64 = (0..5)
                    .map(|j| {
                        let mj = mom.projection(&p, j).unwrap();
                        w.get(t, j) * (0..4).map(|d| mj.get(d, k) * h.get(t, d)).sum::<f64>()
                    })
                    .sum();
                assert!((l.get(t, k) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn invalid_heads() {
        assert!(Head::new(HeadKind::HighRank, 4, 3, 0, 15.0).is_err());
        assert!(Head::new(HeadKind::HighRank, 4, 3, 2, 0.0).is_err());
        assert!(Head::new(HeadKind::Mom, 4, 3, 2, 0.0).is_ok());
        assert!(Head::new(HeadKind::Single, 4, 1, 0, 1.0).is_err());
        let head = Head::new(HeadKind::Single, 4, 3, 0, 1.0).unwrap();
        let p = store(&head, 1);
        assert!(head.logits(&p, &Tensor::zeros(&[2, 5])).is_err());
        assert_eq!("highrank".parse::<HeadKind>().unwrap(), HeadKind::HighRank);
        assert!("softmax".parse::<HeadKind>().is_err());
    }
}
